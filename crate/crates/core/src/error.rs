use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = XcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum XcError {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("evaluation error at {path}: {message}")]
    Eval { path: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("proposer error: {0}")]
    Proposer(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl XcError {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        XcError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        XcError::Io {
            path: path.into(),
            source,
        }
    }
}
