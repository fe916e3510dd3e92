use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A^H| = {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("qubit index {site} out of range for a {n}-qubit chain")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("ZZ coupling ({0}, {1}) is not a nearest-neighbour pair")]
    NonAdjacentPair(usize, usize),

    #[error("annealing parameter s = {0} outside [0, 1]")]
    ScheduleOutOfRange(f64),

    #[error("coefficient vector has length {found}, expected {expected}")]
    CoefficientLength { expected: usize, found: usize },

    #[error("invalid annealer specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("loss {kind} needs exactly 2 classes, got {classes}")]
    BinaryLossClassCount { kind: &'static str, classes: usize },

    #[error("loss needs at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("degenerate embedding: every sample coincides with its class centroid (r_max = 0)")]
    DegenerateSpread,

    #[error("degenerate ground state of H(0) (gap {0:e}); data-driven field gradients are undefined")]
    DegenerateGroundState(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::Dataset(_)
            | Error::Checkpoint(_)
            | Error::BinaryLossClassCount { .. }
            | Error::TooFewClasses(_)
            | Error::EmptyClass(_) => 1,
            _ => 2,
        }
    }
}
