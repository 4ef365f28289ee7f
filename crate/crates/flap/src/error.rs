//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by dataset handling, fitting, metrics, and tests.
#[derive(Debug, Error)]
pub enum FlapError {
    /// Schema parsing or schema/data mismatch.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell or argument failed to decode to the required type.
    #[error("value error: {0}")]
    Value(String),

    /// A sensitive group ended up with no rows.
    #[error("empty group: {0}")]
    EmptyGroup(String),

    /// Model fitting failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// A statistical test could not be carried out.
    #[error("test error: {0}")]
    Test(String),

    /// An operation was called on the wrong preprocessor kind.
    #[error("unsupported preprocessor kind: {0}")]
    PrepKind(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (CLI flags, experiment ids, parameter records).
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlapError>;
