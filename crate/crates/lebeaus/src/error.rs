//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by file I/O, parameter validation, and the estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operating-system level I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents are not in the expected format.
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Array shapes or pixel grids that are required to agree do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A knob is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// NaN or infinity where only finite values are meaningful.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Input that makes the requested estimate undefined (zero signal vector,
    /// singular covariance, empty pixel sets, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
