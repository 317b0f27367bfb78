use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum BidError {
    #[error("horizon T={0} is too short for a bid grid (need T >= 4)")]
    HorizonTooShort(usize),

    #[error("grid index {index} out of range for a grid of {len} points")]
    GridIndex { index: usize, len: usize },

    #[error("feedback claims a win without a payment")]
    WinWithoutPayment,

    #[error("no samples supplied")]
    EmptySamples,

    #[error("insufficient data: n at grid index {0} is zero")]
    InsufficientData(usize),

    #[error("propensity {0} must lie strictly inside (0, 1); clip it first")]
    DegeneratePropensity(f64),

    #[error("linear solve failed: matrix is not positive definite")]
    Singular,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("decision record does not match this policy state: {0}")]
    DecisionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BidError>;

impl BidError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BidError::Io {
            path: path.into(),
            source,
        }
    }
}
