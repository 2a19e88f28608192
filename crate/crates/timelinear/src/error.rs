//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A timestamp string failed to parse; names the offending field.
    #[error("invalid timestamp {input:?}: {reason}")]
    Timestamp { input: String, reason: String },

    /// A tensor or layer received data of the wrong shape.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// Structural problem in a CSV file (1-based line numbers, line 1 = header).
    #[error("{path}:{line}: {reason}")]
    Csv {
        path: String,
        line: usize,
        reason: String,
    },

    /// An invalid configuration value (feature spec, hyperparameter, split…).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The data cannot support the requested operation (too short, constant…).
    #[error("{0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    /// A model file is corrupt or does not match the expected layout.
    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
