use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ProbeError> = std::result::Result<T, E>;

/// Errors raised anywhere in the probing toolkit.
#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("write failed at byte offset {offset}: {source}")]
    Write {
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Invalid synthetic-corpus spec; `pointer` is a JSON pointer into the document.
    #[error("invalid spec at {pointer}: {message}")]
    InvalidSpec { pointer: String, message: String },
}

impl ProbeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProbeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        ProbeError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn spec(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ProbeError::InvalidSpec {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
