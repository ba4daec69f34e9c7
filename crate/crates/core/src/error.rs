use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("non-monotone timestamps at index {0}")]
    NonMonotoneTimestamps(usize),

    #[error("label column `{0}` absent")]
    MissingLabelColumn(String),

    #[error("column fully missing: {0}")]
    ColumnFullyMissing(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("stress spec is frozen (calibration {0}); recalibration is not allowed")]
    Frozen(String),

    #[error("training diverged: non-finite loss at epoch {epoch} (learning rate {learning_rate})")]
    Diverged { epoch: usize, learning_rate: f64 },

    #[error("no score for window starting at {0}")]
    MissingScore(String),

    #[error("duplicate score key {0}")]
    DuplicateScore(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("frozen state modified after the freeze point: {0}")]
    FrozenStateMutated(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("overlapping anomaly scripts on channel {channel}")]
    OverlappingScripts { channel: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
