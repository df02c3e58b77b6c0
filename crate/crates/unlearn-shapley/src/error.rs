//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValuationError {
    /// An operation was called with inputs that violate its contract
    /// (dimension or spec mismatches, empty inputs, etc.).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration or argument value is outside its allowed range.
    #[error("invalid value: {0}")]
    Invalid(String),

    /// A request exceeds a hard capability limit of the chosen algorithm.
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// Malformed input file content.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A non-finite value appeared where the numerics require finiteness.
    #[error("numeric failure: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ValuationError>;
