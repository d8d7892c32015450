use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("point {point:?} lies outside the parameter space")]
    OutOfBounds { point: Vec<f64> },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular design: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular(_) | Error::NonFinite(_) => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
