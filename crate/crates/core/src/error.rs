use thiserror::Error;

/// Errors raised by the testing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("regressor column {column} has zero variance or zero range")]
    DegenerateColumn { column: usize },

    #[error("design matrix [1, X] is rank deficient")]
    RankDeficient,

    /// Numerically degenerate sample, e.g. a perfect fit with zero SSR.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("quadrature for functional `{functional}` did not converge: {detail}")]
    Quadrature {
        functional: &'static str,
        detail: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config hash mismatch: {left} vs {right}")]
    ConfigHashMismatch { left: String, right: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerical degeneracy of the data rather
    /// than by malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::RankDeficient)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
