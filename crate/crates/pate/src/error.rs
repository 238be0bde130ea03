//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by histogram parsing, accounting, and release routines.
#[derive(Error, Debug)]
pub enum PateError {
    /// Two inputs that must agree on the number of classes do not.
    #[error("dimension mismatch: expected {expected} classes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A vote histogram failed validation (too few classes or no votes).
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    /// A parameter is outside its legal range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A CSV row could not be parsed.
    #[error("csv format error at line {line}: {message}")]
    CsvFormat { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A report file parsed as JSON but does not match the expected schema.
    #[error("report schema error: {0}")]
    ReportSchema(String),

    /// A sanitized release was refused because its preconditions do not hold.
    #[error("release refused: {0}")]
    ReleaseRefused(String),
}

pub type Result<T> = std::result::Result<T, PateError>;
