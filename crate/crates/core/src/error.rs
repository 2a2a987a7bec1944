use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("neighborhood size {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("covariance matrix is not positive definite after jitter")]
    NotPositiveDefinite,

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("point {0:?} lies outside the simulation domain")]
    OutOfDomain(Vec<f64>),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
