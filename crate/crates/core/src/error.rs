use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the admissible parameter or state range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a point where a field term is singular.
    #[error("singular evaluation: {0}")]
    Singular(String),

    /// Bisection bracket whose endpoints do not straddle a label boundary.
    #[error("invalid bracket: {0}")]
    BracketInvalid(String),

    /// A search that terminated without producing a verified candidate.
    #[error("no candidate: {0}")]
    NoCandidate(String),

    /// State vector length does not match the chart dimension.
    #[error("dimension mismatch: chart {chart} expects {expected}, got {got}")]
    DimensionMismatch {
        chart: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported critical point: {0}")]
    UnsupportedPoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
