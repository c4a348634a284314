use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),

    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("group {0} has no instances")]
    EmptyGroup(u32),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot sample {count} instances with label {label} for theta={theta}: stratum is empty")]
    EmptyStratum { label: u8, theta: f64, count: usize },

    #[error("quantifier error: {0}")]
    Quantifier(String),

    #[error("degenerate quantifier: calibration denominator {denominator:e} is below 1e-6")]
    DegenerateQuantifier { denominator: f64 },

    #[error("group {group}: {message}")]
    Training { group: u32, message: String },

    #[error("group {0} was not seen during training")]
    UnseenGroup(u32),

    #[error("model format error: {0}")]
    Format(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
