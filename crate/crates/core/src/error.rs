use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LagclError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("invalid configuration for `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("infeasible synthetic configuration: {0}")]
    Infeasible(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {component}")]
    Divergence {
        epoch: usize,
        step: usize,
        component: String,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LagclError> = std::result::Result<T, E>;

impl LagclError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LagclError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        LagclError::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
