use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: index {index} is out of range for dimension {dim}")]
    IndexOutOfRange { line: usize, index: usize, dim: usize },

    #[error("invalid row: {0}")]
    InvalidRow(String),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("cluster is empty")]
    EmptyCluster,

    #[error("cannot remove a point from an empty cluster")]
    SizeUnderflow,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's arguments rather than the data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidMixture(_) | Error::Invalid(_)
        )
    }
}
