use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("unsupported expression `{expr}`: {reason}")]
    Unsupported { expr: String, reason: String },

    #[error("domain error in `{node}`: {message}")]
    Domain { node: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("point is infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("problem file: {0}")]
    Schema(String),

    #[error("cone dimension {q} exceeds the supported maximum {max}")]
    ConeDimension { q: usize, max: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
