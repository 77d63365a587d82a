//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid/mask/vector shapes disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    /// A reduction or estimator was asked to run over zero valid pixels.
    #[error("empty mask: no valid pixels for {op}")]
    EmptyMask { op: &'static str },

    /// Fewer data points than the operation requires.
    #[error("insufficient data for {op}: need {needed}, have {got}")]
    InsufficientData {
        op: &'static str,
        needed: usize,
        got: usize,
    },

    /// Least-squares normal matrix is numerically singular (constant prediction).
    #[error("degenerate alignment: normal-equation determinant {det:e} below threshold")]
    DegenerateAlignment { det: f64 },

    /// Robust scale estimate is zero (constant grid).
    #[error("degenerate scale: mean absolute deviation is zero")]
    DegenerateScale,

    /// min == max over valid pixels; unit-range normalisation undefined.
    #[error("degenerate range: grid is constant over valid pixels")]
    DegenerateRange,

    /// Input values outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (batch divisibility, bad thresholds, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file content (headers, tokens, value ranges).
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dimension(expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
