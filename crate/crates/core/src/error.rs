use thiserror::Error;

/// Errors produced by the tensor autoregression library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("rank-deficient {what}: numerical rank {rank} of {dim}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        dim: usize,
    },

    #[error("model is not stationary: spectral radius {radius} >= 1")]
    Nonstationary { radius: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
