use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LaceError>;

#[derive(Debug, Error)]
pub enum LaceError {
    /// Structurally invalid input (non-finite values, mismatched dimensions, bad labels).
    #[error("validation error: {0}")]
    Validation(String),

    /// A count parameter (rank, k, subsample size) outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// A language or snippet id that the model or corpus does not know.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Malformed on-disk data.
    #[error("format error: {0}")]
    Format(String),

    /// On-disk data that parsed but fails a numerical integrity check.
    #[error("corruption error: {0}")]
    Corruption(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LaceError {
    /// Process exit code: 1 for invalid requests, 2 for I/O and on-disk format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            LaceError::Validation(_) | LaceError::Range(_) | LaceError::Lookup(_) => 1,
            LaceError::Format(_)
            | LaceError::Corruption(_)
            | LaceError::Io(_)
            | LaceError::Json(_)
            | LaceError::Csv(_) => 2,
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> LaceError {
    LaceError::Validation(msg.into())
}

pub(crate) fn range(msg: impl Into<String>) -> LaceError {
    LaceError::Range(msg.into())
}
