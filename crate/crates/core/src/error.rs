use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u64, expected: u64 },

    #[error("checkpoint schema violation: {0}")]
    CheckpointSchema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("dataset {path}, line {line}: {message}")]
    DatasetLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Network-level or HTTP failure talking to a model endpoint.
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate id: {0}")]
    DuplicateId(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether a caller may retry the operation that produced this error.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { retryable: true, .. })
    }

    /// Errors caused by bad user input rather than a runtime fault.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dataset { .. } | Error::DatasetLine { .. }
        )
    }
}
