//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DoaError {
    #[error("invalid array geometry: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// The difference coarray of a sparse array misses the given lag, so the
    /// lag-averaging operator is singular and the virtual measurement vector
    /// cannot be formed.
    #[error("difference coarray has a hole at lag {lag}")]
    CoarrayHole { lag: i64 },
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DoaError>;
