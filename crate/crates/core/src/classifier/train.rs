//! Full-batch (or stratified mini-batch) training with Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::evolution::{batch_pass, BatchPass, Engine, EvolutionGrid, Objective};
use crate::schedule::{AnnealSpec, EmbeddingMap};

use super::adam::{adam_step, TrainState};
use super::predict::{overlap_from_amplitudes, CentroidSet, OverlapMatrix};
use super::{ClassCentroid, LossKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss_kind: LossKind,
    pub w_init_scale: f64,
    pub rng_seed: u64,
    /// `None` trains on the whole set every update.
    pub batch_size: Option<usize>,
    /// Record the training-set overlap matrix every this many epochs.
    pub snapshot_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss_kind: LossKind::BinaryNegDistance,
            w_init_scale: 0.1,
            rng_seed: 0,
            batch_size: None,
            snapshot_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} = {b} must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.w_init_scale >= 0.0 && self.w_init_scale.is_finite()) {
            return bad(format!("w_init_scale {} must be nonnegative", self.w_init_scale));
        }
        if self.batch_size == Some(0) || self.snapshot_every == Some(0) {
            return bad("batch_size and snapshot_every must be positive when set".into());
        }
        Ok(())
    }
}

/// One metrics row, measured after `epoch` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<EpochMetrics>,
    /// Centroids of the final model on the training set.
    pub centroids: CentroidSet,
    /// `(epoch, overlap)` with samples ordered by label, then index.
    pub snapshots: Vec<(usize, OverlapMatrix)>,
    /// Largest (Hermiticity, trace, -min eigenvalue) defect seen on any epoch's centroids.
    pub worst_centroid_defect: (f64, f64, f64),
}

impl TrainOutcome {
    pub fn final_train_accuracy(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.train_accuracy)
    }
}

fn centroid_set(pass: &BatchPass, labels: &[usize], counts: &[usize]) -> Result<CentroidSet> {
    CentroidSet::new(
        pass.centroids
            .iter()
            .zip(labels)
            .zip(counts)
            .map(|((m, &label), &count)| ClassCentroid {
                label,
                matrix: m.clone(),
                count,
            })
            .collect(),
    )
}

fn accuracy(set: &CentroidSet, pass: &BatchPass, samples: &[Sample]) -> f64 {
    let correct = pass
        .final_states
        .iter()
        .zip(samples)
        .filter(|(psi, s)| set.nearest(psi) == s.label)
        .count();
    correct as f64 / samples.len() as f64
}

/// Batches that each contain every class: members of each class are shuffled
/// and dealt round-robin.
fn stratified_batches(samples: &[Sample], labels: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Sample>>> {
    let n_batches = samples.len().div_ceil(batch_size);
    let mut batches: Vec<Vec<Sample>> = vec![Vec::new(); n_batches];
    for &l in labels {
        let mut members: Vec<usize> = (0..samples.len()).filter(|&k| samples[k].label == l).collect();
        if members.len() < n_batches {
            return Err(Error::InvalidConfig(format!(
                "batch_size {batch_size} gives {n_batches} batches but label {l} has only {} samples",
                members.len()
            )));
        }
        members.shuffle(rng);
        for (i, k) in members.into_iter().enumerate() {
            batches[i % n_batches].push(samples[k].clone());
        }
    }
    Ok(batches)
}

pub fn train(dataset: &Dataset, spec: &AnnealSpec, grid: &EvolutionGrid, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(dataset, spec, grid, config, |_| {})
}

/// Like [`train`]; `observer` sees every metrics row as soon as it exists.
pub fn train_with_observer(
    dataset: &Dataset,
    spec: &AnnealSpec,
    grid: &EvolutionGrid,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    if dataset.labels_present.len() < 2 {
        return Err(Error::TooFewClasses(dataset.labels_present.len()));
    }
    let samples = &dataset.samples;
    let labels = dataset.labels_present.clone();
    let counts: Vec<usize> = labels.iter().map(|&l| dataset.count(l)).collect();
    let engine = Engine::new(spec, grid)?;
    let objective = Objective::Loss(config.loss_kind);
    let full_batch = config.batch_size.map_or(true, |b| b >= samples.len());

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let w0 = EmbeddingMap::random(spec, dataset.d, config.w_init_scale, &mut rng);
    let mut state = TrainState::new(w0);
    let snapshot_order = dataset.label_major_order();

    let started = Instant::now();
    let mut pass = batch_pass(&engine, &state.w, samples, &objective, full_batch)?;
    state.initial_loss = Some(pass.value);
    log::info!("initial {} loss {:.6}", config.loss_kind, pass.value);

    let mut metrics = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let mut worst = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut centroids = centroid_set(&pass, &labels, &counts)?;
    for epoch in 1..=config.epochs {
        if full_batch {
            let grad = std::mem::take(&mut pass.grad);
            adam_step(&mut state, &grad, config)?;
        } else {
            let batch_size = config.batch_size.expect("mini-batch mode");
            for batch in stratified_batches(samples, &labels, batch_size, &mut rng)? {
                let g = batch_pass(&engine, &state.w, &batch, &objective, true)?;
                adam_step(&mut state, &g.grad, config)?;
            }
        }
        let want_grad = full_batch && epoch < config.epochs;
        pass = batch_pass(&engine, &state.w, samples, &objective, want_grad).map_err(|e| {
            log::error!("epoch {epoch}: forward pass failed after {} updates: {e}", state.step);
            e
        })?;
        centroids = centroid_set(&pass, &labels, &counts)?;
        for c in centroids.centroids() {
            let (h, t, min_eig) = c.invariant_defects()?;
            worst = (worst.0.max(h), worst.1.max(t), worst.2.max(-min_eig));
        }
        let acc = accuracy(&centroids, &pass, samples);
        let row = EpochMetrics {
            epoch,
            loss: pass.value,
            train_accuracy: acc,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::debug!("epoch {epoch}: loss {:.6} train accuracy {:.4}", row.loss, row.train_accuracy);
        observer(&row);
        state.loss_history.push(row.loss);
        state.accuracy_history.push(row.train_accuracy);
        metrics.push(row);
        if config.snapshot_every.is_some_and(|k| epoch % k == 0 || epoch == config.epochs) {
            let ordered: Vec<&[num_complex::Complex64]> =
                snapshot_order.iter().map(|&k| pass.final_states[k].as_slice()).collect();
            snapshots.push((epoch, overlap_from_amplitudes(&ordered)?));
        }
    }
    Ok(TrainOutcome {
        state,
        metrics,
        centroids,
        snapshots,
        worst_centroid_defect: worst,
    })
}

/// Per-seed accuracies and their mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub failed: Vec<(u64, String)>,
}

impl SeedSummary {
    pub fn train_mean(&self) -> f64 {
        mean(&self.train)
    }
    pub fn test_mean(&self) -> f64 {
        mean(&self.test)
    }
    pub fn train_std(&self) -> f64 {
        std_dev(&self.train)
    }
    pub fn test_std(&self) -> f64 {
        std_dev(&self.test)
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Runs `run(seed) -> (train accuracy, test accuracy)` for each seed in order.
/// Failed seeds are recorded and excluded.
pub fn run_seeds(seeds: &[u64], mut run: impl FnMut(u64) -> Result<(f64, f64)>) -> SeedSummary {
    let mut summary = SeedSummary {
        seeds: Vec::new(),
        train: Vec::new(),
        test: Vec::new(),
        failed: Vec::new(),
    };
    for &seed in seeds {
        match run(seed) {
            Ok((tr, te)) => {
                summary.seeds.push(seed);
                summary.train.push(tr);
                summary.test.push(te);
            }
            Err(e) => {
                log::warn!("seed {seed} failed and is excluded: {e}");
                summary.failed.push((seed, e.to_string()));
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_circles;
    use crate::schedule::CoeffSource;

    fn tiny() -> (Dataset, AnnealSpec, EvolutionGrid) {
        let data = gen_circles(2, 40, &[1.0, 0.5], 0.05, 1).unwrap();
        let spec = AnnealSpec::new(2, 2, 6, 2.0, CoeffSource::FieldsDataDriven).unwrap();
        let grid = EvolutionGrid::for_spec(&spec);
        (data, spec, grid)
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { beta2: -0.1, ..Default::default() },
            TrainConfig { batch_size: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn short_run_descends_and_is_deterministic() {
        let (data, spec, grid) = tiny();
        let cfg = TrainConfig {
            epochs: 15,
            learning_rate: 0.05,
            rng_seed: 3,
            snapshot_every: Some(5),
            ..Default::default()
        };
        let a = train(&data, &spec, &grid, &cfg).unwrap();
        assert_eq!(a.metrics.len(), 15);
        assert_eq!(a.state.step, 15);
        assert!(a.metrics.iter().all(|m| m.loss.is_finite()));
        assert!(a.state.best_loss().unwrap() <= a.state.initial_loss.unwrap());
        assert!(a.metrics.last().unwrap().loss < a.state.initial_loss.unwrap());
        assert_eq!(a.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![5, 10, 15]);
        assert!(a.worst_centroid_defect.0 < 1e-10 && a.worst_centroid_defect.1 < 1e-10 && a.worst_centroid_defect.2 < 1e-10);

        let b = train(&data, &spec, &grid, &cfg).unwrap();
        assert_eq!(a.state.w, b.state.w);
        let strip = |m: &[EpochMetrics]| m.iter().map(|r| (r.loss.to_bits(), r.train_accuracy.to_bits())).collect::<Vec<_>>();
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
    }

    #[test]
    fn last_metrics_row_matches_the_final_model() {
        let (data, spec, grid) = tiny();
        let cfg = TrainConfig { epochs: 4, rng_seed: 9, ..Default::default() };
        let out = train(&data, &spec, &grid, &cfg).unwrap();
        let eval = super::super::evaluate(&data, &out.state.w, &out.centroids, &spec, &grid).unwrap();
        assert_eq!(eval.accuracy, out.final_train_accuracy());
    }

    #[test]
    fn mini_batches_cover_every_class() {
        let (data, spec, grid) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = stratified_batches(&data.samples, &data.labels_present, 8, &mut rng).unwrap();
        assert_eq!(batches.len(), 5);
        assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), 40);
        for b in &batches {
            assert!(b.iter().any(|s| s.label == 0) && b.iter().any(|s| s.label == 1));
        }
        let cfg = TrainConfig { epochs: 2, batch_size: Some(10), ..Default::default() };
        let out = train(&data, &spec, &grid, &cfg).unwrap();
        assert_eq!(out.state.step, 8);
    }

    #[test]
    fn single_class_is_rejected() {
        let (data, spec, grid) = tiny();
        let one = Dataset::new(data.samples.into_iter().filter(|s| s.label == 0).collect()).unwrap();
        assert!(matches!(train(&one, &spec, &grid, &TrainConfig::default()), Err(Error::TooFewClasses(1))));
    }

    #[test]
    fn seed_summary_excludes_failures() {
        let s = run_seeds(&[1, 2, 3], |seed| {
            if seed == 2 {
                Err(Error::DegenerateSpread)
            } else {
                Ok((seed as f64 / 4.0, 0.5))
            }
        });
        assert_eq!(s.seeds, vec![1, 3]);
        assert_eq!(s.failed.len(), 1);
        assert!((s.train_mean() - 0.5).abs() < 1e-15);
        assert!((s.train_std() - 0.25).abs() < 1e-15);
        assert_eq!(s.test_std(), 0.0);
    }
}
