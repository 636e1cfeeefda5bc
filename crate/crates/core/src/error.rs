use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected at least {needed} columns, found {found}")]
    MalformedLine {
        line: usize,
        needed: usize,
        found: usize,
    },
    #[error("corpus contains no sentences")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("k-best list has {0} entries, at least 2 are required")]
    KBestTooShort(usize),
    #[error("prediction record has no attention matrix")]
    MissingAttention,
    #[error("attention row {row} spans a single source position")]
    DegenerateRow { row: usize },
    #[error("zero-length vector cannot be compared by cosine")]
    ZeroVector,
    #[error("similarity matrix row {0} has zero degree")]
    DegenerateDegree(usize),
    #[error("sentence {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
