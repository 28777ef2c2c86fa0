use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("invalid class catalog: {0}")]
    Catalog(String),

    #[error("embedding file: {0}")]
    Embedding(String),

    #[error("embedding count mismatch: file has {found} rows, corpus has {expected}")]
    EmbeddingCount { expected: usize, found: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("split too small: {0} documents cannot fill three splits")]
    SplitTooSmall(usize),

    #[error("invalid ratios: {0}")]
    Ratios(String),

    #[error("no rules defined")]
    NoRules,

    #[error("threshold p={p} out of range for k={k} sources")]
    ThresholdOutOfRange { p: usize, k: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no votes")]
    NoVotes,

    #[error("gradient overflow")]
    GradientOverflow,

    #[error("no matched training documents")]
    EmptyMatched,

    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing gold labels: {0}")]
    MissingGold(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
