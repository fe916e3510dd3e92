use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::EmbeddingMap;

use super::TrainConfig;

/// Optimizer state over a flattened embedding matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub w: EmbeddingMap,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed updates.
    pub step: u64,
    /// Loss before any update.
    pub initial_loss: Option<f64>,
    /// Entry `e` is measured after `e + 1` updates.
    pub loss_history: Vec<f64>,
    pub accuracy_history: Vec<f64>,
}

impl TrainState {
    pub fn new(w: EmbeddingMap) -> Self {
        let n = w.len();
        Self {
            w,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            initial_loss: None,
            loss_history: Vec::new(),
            accuracy_history: Vec::new(),
        }
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.initial_loss
            .iter()
            .chain(&self.loss_history)
            .copied()
            .reduce(f64::min)
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves the state untouched.
pub fn adam_step(state: &mut TrainState, grad: &[f64], config: &TrainConfig) -> Result<()> {
    if grad.len() != state.w.len() {
        return Err(Error::DimensionMismatch {
            expected: state.w.len(),
            found: grad.len(),
        });
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {k} is {} at update {}",
            grad[k],
            state.step + 1
        )));
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let t = state.step as i32 + 1;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        state.w.w[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    state.step += 1;
    Ok(())
}
