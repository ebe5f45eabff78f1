use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DarnError>;

#[derive(Debug, Error)]
pub enum DarnError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The Jacobian was requested at a point where the support is numerically degenerate.
    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged on domain {domain}: {detail}")]
    Divergence { domain: String, detail: String },

    #[error("cache is stale: parameters changed since the forward pass")]
    StaleCache,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DarnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DarnError::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        DarnError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
