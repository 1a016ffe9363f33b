//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch between operands; names both shapes.
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: String,
        left: String,
        right: String,
    },

    /// Invalid user-facing configuration (ranges, sizes, strategy/dataset mismatch).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A soft-target row is not a probability distribution.
    #[error("invalid target distribution: {0}")]
    TargetDistribution(String),

    /// Malformed binary or JSON payload.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must agree do not (e.g. image/label counts).
    #[error("consistency error: {0}")]
    Consistency(String),

    /// A call-site precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dimension(op: &str, left: impl std::fmt::Display, right: impl std::fmt::Display) -> Self {
        Error::Dimension {
            op: op.to_string(),
            left: left.to_string(),
            right: right.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
