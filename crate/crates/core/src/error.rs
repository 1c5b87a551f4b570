use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at epoch {epoch}, step {step}: {what}")]
    NonFinite { epoch: usize, step: usize, what: String },

    #[error("{path}: empty input")]
    EmptyInput { path: PathBuf },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },

    #[error("inconsistent aggregate for {method} at sigma_y={sigma_y}: {reason}")]
    InconsistentAggregate {
        method: String,
        sigma_y: f64,
        reason: String,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
