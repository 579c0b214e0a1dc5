//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation produced a non-finite value at step {step}: {what}")]
    NumericalFailure { step: usize, what: String },

    #[error("invalid collision evidence: {0}")]
    InvalidEvidence(String),

    #[error("unsupported prior family for estimation: {0}")]
    UnsupportedPrior(String),

    #[error("episode exceeded the hard step cap ({cap} actions)")]
    StepCapExceeded { cap: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
