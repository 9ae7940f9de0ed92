//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad widths, inconsistent shapes at build time).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments that violate its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Tensor shapes do not line up for an operation.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// An index or frame fell outside its valid range.
    #[error("range error: {0}")]
    Range(String),

    /// A non-finite value surfaced where the run must stay trustworthy.
    #[error("non-finite value in {0}; aborting run")]
    NonFinite(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
