//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DdclError>;

#[derive(Debug, Error)]
pub enum DdclError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {term}{}", at.as_ref().map(|a| format!(" at {a}")).unwrap_or_default())]
    NonFinite { term: String, at: Option<String> },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("csv error at row {row}, column {col}: {msg}")]
    Csv { row: usize, col: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DdclError {
    pub fn shape(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        DdclError::ShapeMismatch {
            op,
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn non_finite(term: impl Into<String>) -> Self {
        DdclError::NonFinite {
            term: term.into(),
            at: None,
        }
    }
}
