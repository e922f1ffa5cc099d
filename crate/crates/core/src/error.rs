use thiserror::Error;

/// Errors produced anywhere in the fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VsplineError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("interval out of range: index {index}, grid has {intervals} intervals")]
    IntervalOutOfRange { index: usize, intervals: usize },

    #[error("unsupported derivative order {0} (expected 0, 1 or 2)")]
    DerivativeOrder(u8),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system matrix is not positive definite: smallest pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("CV undefined at this parameter point")]
    CvUndefined,

    #[error("candidate rejected: {degenerate} of {n} CV denominators are degenerate")]
    CandidateRejected { degenerate: usize, n: usize },

    #[error("every search candidate failed:\n{0}")]
    SearchFailed(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("SNR undefined: residual variance is zero")]
    SnrUndefined,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no records")]
    NoRecords,

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, VsplineError>;
