use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
///
/// Variants are grouped by the stage that raised them so that callers (the
/// CLI in particular) can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed container {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("non-finite value {value} at pixel {pixel}, channel {channel}")]
    NonFinite { pixel: usize, channel: usize, value: f32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset too small: {n} points but {k} neighbors requested")]
    TooFewPoints { n: usize, k: usize },

    #[error("invalid merge map: {0}")]
    InvalidMergeMap(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input data rather than bad arguments or
    /// numerical trouble.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Format { .. }
                | Error::PayloadSize { .. }
                | Error::NonFinite { .. }
                | Error::DimensionMismatch(_)
                | Error::TooFewPoints { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
