use std::io;

use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure at step {step}: {what}")]
    Numeric { step: u64, what: String },

    #[error("root solver did not converge after {iterations} iterations")]
    Solver { iterations: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("insufficient data: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("cell ({i}, {j}) failed: {source}")]
    Cell {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
