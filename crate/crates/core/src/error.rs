use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or argument is outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A linear system has no unique solution.
    #[error("singular system: {0}")]
    Singular(String),

    /// Triangular factorisation hit a pivot at or below the positive-definiteness tolerance.
    #[error("matrix is not positive definite: pivot {index} is {pivot:e} (tolerance {tolerance:e})")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        tolerance: f64,
    },

    #[error("rank-deficient regressor: {deficient} of {columns} columns are linearly dependent")]
    RankDeficient { deficient: usize, columns: usize },

    #[error("input sequence is identically zero")]
    DegenerateInput,

    #[error("row {0} of the filter matrix is all zero; its frequency response is undefined")]
    ZeroRow(usize),

    #[error("filter design failed: {0}")]
    Design(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {candidates} grid candidates failed; first failure: {first}")]
    AllCandidatesFailed { candidates: usize, first: Box<Error> },

    #[error("unknown benchmark system `{0}`")]
    UnknownSystem(String),

    #[error("method `{method}`: {source}")]
    Method {
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
