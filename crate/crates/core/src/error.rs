use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate shape: {0}")]
    Degenerate(String),

    #[error("unknown parameter `{name}`; valid names: {}", valid.join(", "))]
    UnknownParam { name: String, valid: Vec<String> },

    #[error("parameter `{name}` out of bounds: {message}")]
    OutOfBounds { name: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite loss at step {step}: {terms}")]
    NonFinite { step: u64, terms: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
