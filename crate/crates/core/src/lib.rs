//! Quantum embedding classifier built on simulated analog annealing.
//!
//! Classical feature vectors are mapped linearly onto the Fourier
//! coefficients of annealing schedules, evolved under a transverse-field Ising
//! chain, and classified by the nearest class-averaged density matrix.

pub mod classifier;
pub mod cli;
pub mod data;
pub mod error;
pub mod evolution;
pub mod gradcheck;
pub mod linalg;
pub mod schedule;

pub use error::{Error, Result};
