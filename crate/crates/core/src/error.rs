use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::CheckpointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes or an invalid axis.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller broke an API contract (e.g. differentiating a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("label error: row {row} has label {label}, expected < {num_classes}")]
    Label {
        row: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("I/O error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    /// Non-finite values appeared during training.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
