//! Command-line front end.

pub mod config;
pub mod io;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classifier::{evaluate, overlap_sequence, predict_all, raw_linear_baseline, run_seeds, train_with_observer, LossKind};
use crate::data::{self, Dataset, Sample};
use crate::error::{Error, Result};
use crate::evolution::EvolutionGrid;
use crate::gradcheck::{run_grad_check, GradCheckConfig};

use config::{DatasetKind, RunConfig};
use io::{write_json, write_overlap, Checkpoint, MetricsWriter, Provenance, TrainingMetadata};

#[derive(Debug, Parser)]
#[command(name = "anneal-classifier", version, about = "Quantum annealing embedding classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by every subcommand.
#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training seed (data seed for gen-data).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Qubit count, or a comma-separated list for scaling-sweep.
    #[arg(long, value_delimiter = ',')]
    pub qubits: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Circles,
    Spirals,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test CSVs for a synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        kind: Option<GenKind>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        turns: Option<f64>,
    },
    /// Train a classifier and write metrics and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_seed: Option<u64>,
        /// Export the training-set overlap matrix at every evolution point.
        #[arg(long)]
        snapshots: bool,
    },
    /// Accuracy and confusion matrix of a checkpoint on a labeled CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Predicted labels for a feature vector or CSV rows.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "features")]
        data: Option<PathBuf>,
        /// Comma-separated raw feature values.
        #[arg(long, allow_hyphen_values = true)]
        features: Option<String>,
        #[arg(long)]
        header: bool,
    },
    /// Compare adjoint gradients with finite differences on random instances.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<String>>,
        #[arg(long, default_value_t = 3)]
        max_qubits: usize,
        #[arg(long, default_value_t = 4)]
        max_features: usize,
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
    },
    /// Mean and spread of accuracy over seeds for each qubit count.
    ScalingSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

/// Process exit status for a command outcome.
pub enum Outcome {
    Ok,
    ThresholdFailed,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenData {
            common,
            kind,
            classes,
            train,
            test,
            noise,
            turns,
        } => {
            let mut cfg = load_config(&common)?;
            let ds = &mut cfg.dataset;
            match kind {
                Some(GenKind::Circles) => ds.kind = DatasetKind::Circles,
                Some(GenKind::Spirals) => ds.kind = DatasetKind::Spirals,
                None => {}
            }
            ds.classes = classes.unwrap_or(ds.classes);
            ds.n_train = train.unwrap_or(ds.n_train);
            ds.n_test = test.unwrap_or(ds.n_test);
            ds.noise_std = noise.unwrap_or(ds.noise_std);
            ds.turns = turns.unwrap_or(ds.turns);
            if let Some(seed) = common.seed {
                cfg.seeds.data = seed;
            }
            cfg.validate()?;
            cmd_gen_data(&cfg, &config_dir(&common)).map(|_| Outcome::Ok)
        }
        Command::Train {
            common,
            data_seed,
            snapshots,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = data_seed {
                cfg.seeds.data = s;
            }
            if snapshots {
                cfg.output.snapshots = true;
            }
            cfg.validate()?;
            let out = cfg.out_dir.clone();
            let summary = train_run(&cfg, &config_dir(&common), &out, cfg.seeds.data, cfg.seeds.train)?;
            println!(
                "train accuracy {:.4}  test accuracy {:.4}  final loss {:.6}",
                summary.train_accuracy, summary.test_accuracy, summary.final_loss
            );
            Ok(Outcome::Ok)
        }
        Command::Eval {
            common,
            checkpoint,
            data,
            header,
        } => cmd_eval(&checkpoint, &data, header, common.out.as_deref()).map(|_| Outcome::Ok),
        Command::Predict {
            common,
            checkpoint,
            data,
            features,
            header,
        } => cmd_predict(&checkpoint, data.as_deref(), features.as_deref(), header, common.out.as_deref())
            .map(|_| Outcome::Ok),
        Command::GradCheck {
            common,
            instances,
            threshold,
            losses,
            max_qubits,
            max_features,
            fd_step,
        } => {
            let losses = match losses {
                Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<LossKind>>>()?,
                None => LossKind::ALL.to_vec(),
            };
            let cfg = GradCheckConfig {
                instances,
                seed: common.seed.unwrap_or(0),
                max_qubits,
                max_features,
                losses,
                fd_step,
                rel_threshold: threshold,
                ..GradCheckConfig::default()
            };
            if cfg.max_qubits > 3 || cfg.max_features > 4 {
                return Err(Error::InvalidConfig("grad-check caps are n <= 3 and d <= 4".into()));
            }
            let passed = cmd_grad_check(&cfg, common.out.as_deref())?;
            Ok(if passed { Outcome::Ok } else { Outcome::ThresholdFailed })
        }
        Command::ScalingSweep { common, seeds } => {
            let mut cfg = load_config(&common)?;
            if let Some(q) = &common.qubits {
                cfg.experiment.qubits = q.clone();
            }
            if let Some(s) = seeds {
                cfg.experiment.seeds = s;
            }
            cfg.validate()?;
            cmd_scaling_sweep(&cfg, &config_dir(&common)).map(|_| Outcome::Ok)
        }
    }
}

fn config_dir(common: &Common) -> PathBuf {
    common
        .config
        .as_ref()
        .and_then(|p| p.parent())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Config file (or defaults) with command-line overrides applied.
pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds.train = s;
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    if let Some(q) = &common.qubits {
        if let [n] = q.as_slice() {
            cfg.annealer.n_qubits = *n;
            cfg.annealer.hx = None;
            cfg.annealer.hz = None;
            cfg.annealer.j = None;
        }
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct GenDetails<'a> {
    dataset: &'a config::DatasetConfig,
    data_seed: u64,
    train_rows: usize,
    test_rows: usize,
}

pub fn cmd_gen_data(cfg: &RunConfig, base_dir: &Path) -> Result<(Dataset, Dataset)> {
    if matches!(cfg.dataset.kind, DatasetKind::Digits | DatasetKind::Csv) {
        return Err(Error::InvalidConfig("gen-data only generates circles or spirals".into()));
    }
    let (train, test) = cfg.load_data(cfg.seeds.data, base_dir)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    train.write_csv(&cfg.out_dir.join("train.csv"))?;
    test.write_csv(&cfg.out_dir.join("test.csv"))?;
    write_json(
        &cfg.out_dir.join("provenance.json"),
        &Provenance::new(
            "gen-data",
            GenDetails {
                dataset: &cfg.dataset,
                data_seed: cfg.seeds.data,
                train_rows: train.len(),
                test_rows: test.len(),
            },
        ),
    )?;
    println!("wrote {} train and {} test rows to {}", train.len(), test.len(), cfg.out_dir.display());
    Ok((train, test))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub n_qubits: usize,
    pub data_seed: u64,
    pub train_seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_loss: f64,
    pub baseline_train_accuracy: f64,
    pub baseline_test_accuracy: f64,
    pub overlap_within: Option<f64>,
    pub overlap_between: Option<f64>,
    /// Largest Hermiticity, trace or negativity defect of any epoch's centroids.
    pub centroid_defect: f64,
    pub all_losses_finite: bool,
}

#[derive(Serialize)]
struct TrainDetails<'a> {
    config: &'a RunConfig,
    data_seed: u64,
    train_seed: u64,
    train_rows: usize,
    test_rows: usize,
    parameters: usize,
}

/// Full training pipeline writing into `out`: `train.csv`, `test.csv`,
/// `metrics.csv`, `checkpoint.json`, `summary.json`, `provenance.json`, and
/// `overlap/` when snapshots are enabled.
pub fn train_run(cfg: &RunConfig, base_dir: &Path, out: &Path, data_seed: u64, train_seed: u64) -> Result<TrainSummary> {
    let spec = cfg.annealer.spec()?;
    let grid = EvolutionGrid::for_spec(&spec);
    let tcfg = cfg.train.to_config(train_seed);
    tcfg.validate()?;
    let prepared = cfg.prepare_data(data_seed, base_dir)?;
    std::fs::create_dir_all(out)?;
    prepared.raw_train.write_csv(&out.join("train.csv"))?;
    prepared.raw_test.write_csv(&out.join("test.csv"))?;
    write_json(
        &out.join("provenance.json"),
        &Provenance::new(
            "train",
            TrainDetails {
                config: cfg,
                data_seed,
                train_seed,
                train_rows: prepared.train.len(),
                test_rows: prepared.test.len(),
                parameters: spec.param_count(prepared.train.d),
            },
        ),
    )?;

    let mut metrics = MetricsWriter::create(&out.join("metrics.csv"), cfg.output.wall_clock)?;
    let mut write_err = None;
    let outcome = train_with_observer(&prepared.train, &spec, &grid, &tcfg, |row| {
        if let Err(e) = metrics.row(row) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }

    let last = outcome.metrics.last().expect("at least one epoch");
    let checkpoint = Checkpoint::new(
        &spec,
        &outcome.state.w,
        &prepared.stats,
        TrainingMetadata {
            data_seed,
            train_seed,
            epochs_completed: outcome.metrics.len(),
            loss_kind: tcfg.loss_kind,
            initial_loss: outcome.state.initial_loss.unwrap_or(f64::NAN),
            final_loss: last.loss,
            final_train_accuracy: last.train_accuracy,
        },
        &outcome.centroids,
    );
    checkpoint.save(&out.join("checkpoint.json"))?;

    let test_eval = evaluate(&prepared.test, &outcome.state.w, &outcome.centroids, &spec, &grid)?;
    let (base_tr, base_te) = raw_linear_baseline(&prepared.train, &prepared.test)?;

    let (mut within, mut between) = (None, None);
    if !outcome.snapshots.is_empty() || cfg.output.snapshots {
        let dir = out.join("overlap");
        std::fs::create_dir_all(&dir)?;
        for (epoch, m) in &outcome.snapshots {
            write_overlap(&dir, &format!("epoch_{epoch:05}"), m)?;
        }
        if cfg.output.snapshots {
            let (frames, labels) = overlap_sequence(&prepared.train.samples, &outcome.state.w, &spec, &grid)?;
            for (step, m) in frames.iter().enumerate() {
                write_overlap(&dir, &format!("step_{step:03}"), m)?;
            }
            let (w, b) = frames.last().expect("steps + 1 frames").block_means(&labels);
            within = Some(w);
            between = Some(b);
            let label_text: String = labels.iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(dir.join("labels.txt"), label_text)?;
        }
    }

    let summary = TrainSummary {
        n_qubits: spec.n_qubits,
        data_seed,
        train_seed,
        train_accuracy: last.train_accuracy,
        test_accuracy: test_eval.accuracy,
        initial_loss: outcome.state.initial_loss.unwrap_or(f64::NAN),
        final_loss: last.loss,
        best_loss: outcome.state.best_loss().unwrap_or(f64::NAN),
        baseline_train_accuracy: base_tr,
        baseline_test_accuracy: base_te,
        overlap_within: within,
        overlap_between: between,
        centroid_defect: {
            let (h, t, neg) = outcome.worst_centroid_defect;
            h.max(t).max(neg)
        },
        all_losses_finite: outcome.metrics.iter().all(|m| m.loss.is_finite()),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Normalized copy of `data` ready for the checkpoint's embedding.
fn prepare_for(checkpoint: &Checkpoint, data: &Dataset) -> Result<Dataset> {
    let expected = checkpoint.embedding.cols;
    if data.d != expected {
        return Err(Error::Dataset(format!(
            "dataset has {} features but the checkpoint expects {expected}",
            data.d
        )));
    }
    checkpoint.normalization.apply_dataset(data)
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    samples: usize,
    labels: Vec<usize>,
    confusion: Vec<Vec<usize>>,
}

pub fn cmd_eval(checkpoint: &Path, data_path: &Path, header: bool, out: Option<&Path>) -> Result<f64> {
    let ck = Checkpoint::load(checkpoint)?;
    let raw = data::load_csv(data_path, header)?;
    let data = prepare_for(&ck, &raw)?;
    let grid = EvolutionGrid::for_spec(&ck.spec);
    let eval = evaluate(&data, &ck.embedding_map()?, &ck.centroid_set()?, &ck.spec, &grid)?;
    let mut text = format!("accuracy {:.6} ({} samples)\nconfusion (rows true, columns predicted)\n", eval.accuracy, data.len());
    let header_row: Vec<String> = eval.labels.iter().map(|l| l.to_string()).collect();
    writeln!(text, "\t{}", header_row.join("\t")).expect("write to String");
    for (l, row) in eval.labels.iter().zip(&eval.confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(text, "{l}\t{}", cells.join("\t")).expect("write to String");
    }
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(
            &dir.join("eval.json"),
            &EvalReport {
                accuracy: eval.accuracy,
                samples: data.len(),
                labels: eval.labels.clone(),
                confusion: eval.confusion.clone(),
            },
        )?;
    }
    Ok(eval.accuracy)
}

/// Rows of `d` features, or `d` features plus a trailing label that is ignored.
pub fn parse_feature_rows(text: &str, d: usize, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != d && cells.len() != d + 1 {
            return Err(Error::Parse {
                row,
                msg: format!("expected {d} features (optionally followed by a label), found {} columns", cells.len()),
            });
        }
        let features = cells[..d]
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                    row,
                    msg: format!("column {}: '{cell}' is not a finite number", c + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(features);
    }
    Ok(rows)
}

pub fn cmd_predict(
    checkpoint: &Path,
    data_path: Option<&Path>,
    features: Option<&str>,
    header: bool,
    out: Option<&Path>,
) -> Result<Vec<usize>> {
    let ck = Checkpoint::load(checkpoint)?;
    let d = ck.embedding.cols;
    let rows = match (data_path, features) {
        (Some(p), None) => parse_feature_rows(&std::fs::read_to_string(p)?, d, header)?,
        (None, Some(f)) => parse_feature_rows(f, d, false)?,
        _ => return Err(Error::InvalidConfig("give exactly one of --data or --features".into())),
    };
    let samples: Vec<Sample> = rows
        .iter()
        .map(|x| Sample {
            features: ck.normalization.apply(x),
            label: 0,
        })
        .collect();
    let labels = if samples.is_empty() {
        Vec::new()
    } else {
        let grid = EvolutionGrid::for_spec(&ck.spec);
        predict_all(&samples, &ck.embedding_map()?, &ck.centroid_set()?, &ck.spec, &grid)?
    };
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    print!("{text}");
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
    }
    Ok(labels)
}

pub fn cmd_grad_check(cfg: &GradCheckConfig, out: Option<&Path>) -> Result<bool> {
    let report = run_grad_check(cfg)?;
    for r in &report.instances {
        println!(
            "#{:<3} n={} d={} N={:<2} {:<19} {:<20} entries={:<4} max_rel_err={:.3e} max_abs_err_small={:.3e} {}",
            r.index,
            r.n_qubits,
            r.features,
            r.steps,
            r.loss.name(),
            format!("{:?}", r.coeff_source),
            r.entries,
            r.max_rel_err,
            r.max_abs_err_small,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    println!(
        "{}: max relative error {:.3e} over {} instances (threshold {:.1e})",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_err,
        report.instances.len(),
        cfg.rel_threshold
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("grad_check.json"), &report)?;
    }
    Ok(report.passed)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n_qubits: usize,
    pub runs: usize,
    pub failed: usize,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

pub const SWEEP_HEADER: &str = "n_qubits,runs,failed,train_mean,train_std,test_mean,test_std";

pub fn cmd_scaling_sweep(cfg: &RunConfig, base_dir: &Path) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &n in &cfg.experiment.qubits {
        let mut run_cfg = cfg.clone();
        run_cfg.annealer.n_qubits = n;
        run_cfg.annealer.hx = None;
        run_cfg.annealer.hz = None;
        run_cfg.annealer.j = None;
        let summary = run_seeds(&cfg.experiment.seeds, |seed| {
            let data_seed = if cfg.experiment.resample_data {
                cfg.seeds.data.wrapping_add(seed)
            } else {
                cfg.seeds.data
            };
            let dir = cfg.out_dir.join(format!("q{n}_seed{seed}"));
            let s = train_run(&run_cfg, base_dir, &dir, data_seed, seed)?;
            log::info!("n={n} seed={seed}: train {:.4} test {:.4}", s.train_accuracy, s.test_accuracy);
            Ok((s.train_accuracy, s.test_accuracy))
        });
        let row = SweepRow {
            n_qubits: n,
            runs: summary.seeds.len(),
            failed: summary.failed.len(),
            train_mean: summary.train_mean(),
            train_std: summary.train_std(),
            test_mean: summary.test_mean(),
            test_std: summary.test_std(),
        };
        println!(
            "n={n}: train {:.4} +/- {:.4}  test {:.4} +/- {:.4}  ({} runs, {} failed)",
            row.train_mean, row.train_std, row.test_mean, row.test_std, row.runs, row.failed
        );
        rows.push(row);
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.n_qubits,
            r.runs,
            r.failed,
            data::fmt_f64(r.train_mean),
            data::fmt_f64(r.train_std),
            data::fmt_f64(r.test_mean),
            data::fmt_f64(r.test_std)
        )
        .expect("write to String");
    }
    std::fs::write(cfg.out_dir.join("sweep.csv"), csv)?;
    #[derive(Serialize)]
    struct SweepDetails<'a> {
        config: &'a RunConfig,
    }
    write_json(&cfg.out_dir.join("provenance.json"), &Provenance::new("scaling-sweep", SweepDetails { config: cfg }))?;
    Ok(rows)
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::ThresholdFailed) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
