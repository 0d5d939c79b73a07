use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 in input at byte offset {offset}")]
    Ingestion { offset: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("fold error: {0}")]
    Fold(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver error: {0}")]
    Solver(String),

    /// Every admissible weight vector leaves some token with zero probability.
    #[error("weak model: {0}")]
    WeakModel(String),

    #[error("experiment failed on fold {fold}: {source}")]
    Experiment {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_computational(&self) -> bool {
        match self {
            Error::Solver(_) | Error::WeakModel(_) => true,
            Error::Experiment { source, .. } => source.is_computational(),
            _ => false,
        }
    }
}
