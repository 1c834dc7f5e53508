use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tick line that could not be parsed at all.
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    /// A parsed tick line whose values break an invariant (e.g. negative volume).
    #[error("line {line}: invalid tick: {reason}")]
    InvalidTick { line: u64, reason: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Every stock was removed as degenerate; nothing left to infer.
    #[error("empty dataset: all {dropped} stocks have constant spin series")]
    EmptyDataset { dropped: usize },

    #[error(
        "correlation matrix is singular or ill-conditioned (condition estimate {condition:.3e} > bound {bound:.1e}); \
         try a ridge term lambda > 0"
    )]
    Singular { condition: f64, bound: f64 },

    /// A value outside the domain of a function (e.g. atanh(±1)).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("similarity undefined: both matrices are zero off the diagonal")]
    UndefinedSimilarity,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
