use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv row {row}: {message}")]
    MalformedCsv { row: u64, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate email id {0:?}")]
    DuplicateId(String),

    #[error("invalid label {value:?} in row {row} (expected 0 or 1)")]
    InvalidLabel { row: u64, value: String },

    #[error("{0}")]
    InvalidConfig(String),

    #[error("dataset contains only one class; both phishing and legitimate emails are required")]
    SingleClass,

    #[error("dataset is unlabeled: email {0:?} has no label")]
    MissingLabel(String),

    #[error("fold count {k} out of range for {n} emails")]
    BadFoldCount { k: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not a checkpoint (bad magic header)")]
    BadCheckpointMagic,

    #[error("truncated or corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint/input mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("malformed embedding file at line {line}: {message}")]
    MalformedEmbedding { line: usize, message: String },

    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }
}
