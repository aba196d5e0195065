//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data; carries a location when one is known.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A precondition or invariant on user-supplied values failed.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Tensor shape mismatch in the numeric kernel.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Checkpoint file rejected (bad magic, manifest, or payload size).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Numeric failure during optimization (NaN/inf gradients etc.).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
