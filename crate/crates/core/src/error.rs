use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact support enumeration needs 2^{d} solves; use the approximate maximizer for d > {max}")]
    TooManySupports { d: usize, max: usize },

    #[error("objective is not finite at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("cholesky factorization failed after diagonal jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace for {algorithm} run {run} decreases at t={t}: {prev} -> {next}")]
    NonMonotoneTrace {
        algorithm: String,
        run: usize,
        t: usize,
        prev: f64,
        next: f64,
    },

    #[error("malformed csv {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
