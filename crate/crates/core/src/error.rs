use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("no samples passed the daylight filter; metrics are undefined")]
    EmptyReport,

    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("truncated `{field}`: expected {expected} bytes, found {actual}")]
    Truncated {
        field: String,
        expected: usize,
        actual: usize,
    },

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Divergence { epoch: usize, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The file field or config key an error names, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Format { field, .. } | Error::Truncated { field, .. } => Some(field),
            Error::Config { key, .. } => Some(key),
            _ => None,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
