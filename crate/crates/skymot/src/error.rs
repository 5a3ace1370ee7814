//! Crate-wide error and result types.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    /// A file on disk does not match its declared format. Carries the file
    /// and, where known, the 1-based line the problem was found on.
    #[error("format error in {path}{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<usize>,
        msg: String,
    },

    /// A value or combination of values fails a documented validity rule
    /// (bad config field, degenerate geometry, shape mismatch, ...).
    #[error("invalid: {0}")]
    Invalid(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, line: impl Into<Option<usize>>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line: line.into(),
            msg: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
}
