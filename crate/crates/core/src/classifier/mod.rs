//! Training, prediction and diagnostics.

mod adam;
pub mod loss;
mod predict;
mod train;

pub use adam::{adam_step, TrainState};
pub use loss::*;
pub use predict::*;
pub use train::*;
