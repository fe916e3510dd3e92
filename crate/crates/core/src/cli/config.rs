//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{LossKind, TrainConfig};
use crate::data::{self, Dataset, NormalizationMode, NormStats};
use crate::error::{Error, Result};
use crate::schedule::{default_hx, default_hz, default_j, AnnealSpec, CoeffSource, StepSampling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub annealer: AnnealerConfig,
    pub train: TrainSection,
    pub dataset: DatasetConfig,
    pub seeds: Seeds,
    pub experiment: Experiment,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            annealer: AnnealerConfig::default(),
            train: TrainSection::default(),
            dataset: DatasetConfig::default(),
            seeds: Seeds::default(),
            experiment: Experiment::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealerConfig {
    pub n_qubits: usize,
    pub n_sines: usize,
    pub steps: usize,
    pub t_max: f64,
    pub coeff_source: CoeffSource,
    pub step_sampling: StepSampling,
    /// Defaults depend on `n_qubits` when omitted.
    pub hx: Option<Vec<f64>>,
    pub hz: Option<Vec<f64>>,
    pub j: Option<Vec<f64>>,
}

impl Default for AnnealerConfig {
    fn default() -> Self {
        Self {
            n_qubits: 3,
            n_sines: 3,
            steps: 10,
            t_max: 2.0,
            coeff_source: CoeffSource::FieldsFixed,
            step_sampling: StepSampling::Midpoint,
            hx: None,
            hz: None,
            j: None,
        }
    }
}

impl AnnealerConfig {
    pub fn spec(&self) -> Result<AnnealSpec> {
        let n = self.n_qubits;
        AnnealSpec {
            n_qubits: n,
            n_sines: self.n_sines,
            steps: self.steps,
            t_max: self.t_max,
            hx: self.hx.clone().unwrap_or_else(|| default_hx(n)),
            hz: self.hz.clone().unwrap_or_else(|| default_hz(n)),
            j: self.j.clone().unwrap_or_else(|| default_j(n)),
            coeff_source: self.coeff_source,
            step_sampling: self.step_sampling,
        }
        .validated()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss_kind: LossKind,
    pub w_init_scale: f64,
    pub batch_size: Option<usize>,
    pub snapshot_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            loss_kind: t.loss_kind,
            w_init_scale: t.w_init_scale,
            batch_size: t.batch_size,
            snapshot_every: t.snapshot_every,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, rng_seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            loss_kind: self.loss_kind,
            w_init_scale: self.w_init_scale,
            rng_seed,
            batch_size: self.batch_size,
            snapshot_every: self.snapshot_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Circles,
    Spirals,
    /// 8x8 digits CSV split by `train_fraction`.
    Digits,
    /// Separate train and test CSV files.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub radii: Option<Vec<f64>>,
    pub noise_std: f64,
    pub turns: f64,
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub header: bool,
    pub labels: Option<Vec<usize>>,
    pub train_fraction: f64,
    pub normalization: Option<NormalizationMode>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Circles,
            classes: 2,
            n_train: 500,
            n_test: 100,
            radii: None,
            noise_std: data::DEFAULT_NOISE_STD,
            turns: 1.5,
            path: None,
            test_path: None,
            header: false,
            labels: None,
            train_fraction: 0.9,
            normalization: None,
        }
    }
}

/// The two sources of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub train: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { data: 7, train: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    /// Training seeds for multi-seed runs.
    pub seeds: Vec<u64>,
    pub qubits: Vec<usize>,
    /// Offset the data seed by each run's training seed, so every trial also
    /// draws a fresh dataset or split.
    pub resample_data: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3],
            qubits: vec![1, 2, 3, 4, 5],
            resample_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write elapsed milliseconds in the metrics CSV; zeros otherwise, which
    /// makes the file a pure function of the configuration.
    pub wall_clock: bool,
    /// Export overlap matrices at every evolution point after training.
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            wall_clock: true,
            snapshots: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every module precondition that does not need the data.
    pub fn validate(&self) -> Result<()> {
        self.annealer.spec()?;
        self.train.to_config(self.seeds.train).validate()?;
        let ds = &self.dataset;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match ds.kind {
            DatasetKind::Circles | DatasetKind::Spirals => {
                let classes = if ds.kind == DatasetKind::Spirals { 2 } else { ds.classes };
                if ds.n_train == 0 || ds.n_test == 0 {
                    return bad("n_train and n_test must be positive".into());
                }
                if ds.n_train % classes != 0 || ds.n_test % classes != 0 {
                    return bad(format!("n_train and n_test must be multiples of {classes}"));
                }
                if ds.kind == DatasetKind::Circles {
                    if !(2..=3).contains(&ds.classes) {
                        return bad(format!("circles need 2 or 3 classes, got {}", ds.classes));
                    }
                    if let Some(r) = &ds.radii {
                        if r.len() != ds.classes {
                            return bad(format!("{} radii for {} classes", r.len(), ds.classes));
                        }
                    }
                }
                if !(ds.noise_std >= 0.0) {
                    return bad("noise_std must be nonnegative".into());
                }
            }
            DatasetKind::Digits => {
                if !(ds.train_fraction > 0.0 && ds.train_fraction < 1.0) {
                    return bad(format!("train_fraction {} must be in (0, 1)", ds.train_fraction));
                }
            }
            DatasetKind::Csv => {
                if ds.path.is_none() || ds.test_path.is_none() {
                    return bad("csv datasets need both path and test_path".into());
                }
            }
        }
        if self.experiment.seeds.is_empty() || self.experiment.qubits.is_empty() {
            return bad("experiment seeds and qubits must be nonempty".into());
        }
        for &n in &self.experiment.qubits {
            AnnealerConfig {
                n_qubits: n,
                hx: None,
                hz: None,
                j: None,
                ..self.annealer.clone()
            }
            .spec()?;
        }
        Ok(())
    }

    pub fn normalization(&self) -> NormalizationMode {
        self.dataset.normalization.unwrap_or(match self.dataset.kind {
            DatasetKind::Digits => NormalizationMode::ScaleToUnit { constant: 16.0 },
            _ => NormalizationMode::None,
        })
    }

    /// Raw train and test sets for a data seed.
    pub fn load_data(&self, data_seed: u64, base_dir: &Path) -> Result<(Dataset, Dataset)> {
        let ds = &self.dataset;
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        match ds.kind {
            DatasetKind::Circles => {
                let radii = ds.radii.clone().unwrap_or_else(|| data::default_radii(ds.classes));
                let all = data::gen_circles(ds.classes, ds.n_train + ds.n_test, &radii, ds.noise_std, data_seed)?;
                split_prefix(all, ds.n_train)
            }
            DatasetKind::Spirals => {
                let all = data::gen_spirals(ds.n_train + ds.n_test, ds.turns, ds.noise_std, data_seed)?;
                split_prefix(all, ds.n_train)
            }
            DatasetKind::Digits => {
                let path = ds
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("digits dataset needs a path".into()))?;
                let all = data::load_digits_csv(&resolve(path), ds.labels.as_deref(), ds.header)?;
                data::split(&all, ds.train_fraction, data_seed)
            }
            DatasetKind::Csv => {
                let load = |p: &Option<PathBuf>| -> Result<Dataset> {
                    let p = p.as_ref().ok_or_else(|| Error::InvalidConfig("missing csv path".into()))?;
                    let d = data::load_csv(&resolve(p), ds.header)?;
                    Ok(match &ds.labels {
                        Some(keep) => Dataset::with_dim(
                            d.samples.into_iter().filter(|s| keep.contains(&s.label)).collect(),
                            d.d,
                        )?,
                        None => d,
                    })
                };
                Ok((load(&ds.path)?, load(&ds.test_path)?))
            }
        }
    }

    /// Raw and normalized splits plus the statistics used.
    pub fn prepare_data(&self, data_seed: u64, base_dir: &Path) -> Result<PreparedData> {
        let (raw_train, raw_test) = self.load_data(data_seed, base_dir)?;
        let (train, test, stats) = data::normalize(&raw_train, &raw_test, self.normalization())?;
        Ok(PreparedData {
            raw_train,
            raw_test,
            train,
            test,
            stats,
        })
    }
}

pub struct PreparedData {
    pub raw_train: Dataset,
    pub raw_test: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
}

/// Generated samples alternate classes, so a prefix split stays balanced.
fn split_prefix(all: Dataset, n_train: usize) -> Result<(Dataset, Dataset)> {
    let d = all.d;
    let mut samples = all.samples;
    let test = samples.split_off(n_train);
    Ok((Dataset::with_dim(samples, d)?, Dataset::with_dim(test, d)?))
}
