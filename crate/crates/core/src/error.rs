use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record could not be parsed. `field` names the offending field when known.
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported index format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("plugin `{0}` is not registered")]
    UnknownPlugin(String),

    #[error("remote plugin call failed: {0}")]
    Remote(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data rather than the environment.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Duplicate { .. }
                | Error::EmptyQuery
                | Error::NotFound { .. }
                | Error::DimensionMismatch { .. }
                | Error::Format { .. }
                | Error::Config(_)
                | Error::UnknownPlugin(_)
        )
    }
}
