//! Adjoint gradients against central finite differences on random small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::LossKind;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::evolution::{fd_gradient_oracle, grad_loss_wrt_w, EvolutionGrid, Objective};
use crate::schedule::{AnnealSpec, CoeffSource, EmbeddingMap};

/// Size caps and tolerances for [`run_grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub max_qubits: usize,
    pub max_features: usize,
    pub step_choices: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub fd_step: f64,
    pub rel_threshold: f64,
    /// Absolute tolerance for entries whose finite-difference value is below
    /// the relative-error floor.
    pub abs_threshold: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            max_qubits: 3,
            max_features: 4,
            step_choices: vec![1, 5, 10],
            losses: LossKind::ALL.to_vec(),
            fd_step: 1e-5,
            rel_threshold: 1e-4,
            abs_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    pub n_qubits: usize,
    pub n_sines: usize,
    pub features: usize,
    pub steps: usize,
    pub coeff_source: CoeffSource,
    pub loss: LossKind,
    pub samples: usize,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub instances: Vec<InstanceReport>,
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub passed: bool,
}

/// Random instance `index` of a suite: spec, embedding and batch.
pub fn random_instance(config: &GradCheckConfig, index: usize) -> Result<(AnnealSpec, EmbeddingMap, Vec<Sample>, LossKind)> {
    if config.losses.is_empty() || config.step_choices.is_empty() {
        return Err(Error::InvalidConfig("grad-check needs at least one loss and one step count".into()));
    }
    if config.max_qubits == 0 || config.max_features == 0 {
        return Err(Error::InvalidConfig("grad-check caps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9).wrapping_add(index as u64));
    let loss = config.losses[index % config.losses.len()];
    let n = rng.gen_range(1..=config.max_qubits);
    let d = rng.gen_range(1..=config.max_features);
    let steps = config.step_choices[index / config.losses.len() % config.step_choices.len()];
    let n_sines = rng.gen_range(1..=3);
    let t_max = rng.gen_range(0.5..2.0);
    let source = if rng.gen_bool(0.5) {
        CoeffSource::FieldsFixed
    } else {
        CoeffSource::FieldsDataDriven
    };
    let spec = AnnealSpec::new(n, n_sines, steps, t_max, source)?;
    let classes = match loss {
        LossKind::BinaryNegDistance => 2,
        _ => rng.gen_range(2..=3),
    };
    let min_per_class = if loss == LossKind::NegMinOverSpread { 2 } else { 1 };
    let mut batch = Vec::new();
    for label in 0..classes {
        for _ in 0..rng.gen_range(min_per_class..=3) {
            batch.push(Sample {
                features: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label,
            });
        }
    }
    let w = EmbeddingMap::random(&spec, d, 0.5, &mut rng);
    Ok((spec, w, batch, loss))
}

pub fn check_instance(config: &GradCheckConfig, index: usize) -> Result<InstanceReport> {
    let (spec, w, batch, loss) = random_instance(config, index)?;
    let grid = EvolutionGrid::for_spec(&spec);
    let mut report = grad_loss_wrt_w(&spec, &w, &batch, &grid, loss)?;
    let fd = fd_gradient_oracle(&spec, &w, &batch, &grid, &Objective::Loss(loss), config.fd_step)?;
    let check = report.attach_fd(&fd);
    Ok(InstanceReport {
        index,
        n_qubits: spec.n_qubits,
        n_sines: spec.n_sines,
        features: w.cols,
        steps: spec.steps,
        coeff_source: spec.coeff_source,
        loss,
        samples: batch.len(),
        entries: check.entries,
        max_rel_err: check.max_rel_err,
        max_abs_err_small: check.max_abs_err_small,
        passed: check.passes(config.rel_threshold, config.abs_threshold),
    })
}

pub fn run_grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(config.fd_step > 0.0) {
        return Err(Error::InvalidConfig(format!("fd step {} must be positive", config.fd_step)));
    }
    let instances = (0..config.instances)
        .map(|i| check_instance(config, i))
        .collect::<Result<Vec<_>>>()?;
    let max_rel_err = instances.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let max_abs_err_small = instances.iter().map(|r| r.max_abs_err_small).fold(0.0, f64::max);
    let passed = instances.iter().all(|r| r.passed);
    Ok(GradCheckReport {
        instances,
        max_rel_err,
        max_abs_err_small,
        passed,
    })
}
