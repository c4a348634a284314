use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Data(#[from] cape::Error),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("setting {setting}, iteration {iteration}: {source}")]
    Run {
        setting: String,
        iteration: usize,
        #[source]
        source: cape::Error,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config { .. } => 1,
            HarnessError::Data(cape::Error::InvalidParameter(_)) => 1,
            HarnessError::Invariant(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
