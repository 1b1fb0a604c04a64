use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// Inconsistent flags and file contents; maps to a usage error.
    #[error("format conflict: {0}")]
    FormatConflict(String),

    #[error("target mass {target} exceeds attainable maximum {max}")]
    Unattainable { target: f64, max: f64 },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lambda = {lambda}): {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        lambda: f64,
        detail: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
