use thiserror::Error;

/// Errors raised by the selection engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DacsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate input at row {row}: {reason}")]
    DegenerateInput { row: usize, reason: String },

    #[error("cannot split {distinct} distinct values into {requested} classes; use h <= {distinct}")]
    DegeneratePartition { requested: usize, distinct: usize },

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

pub type Result<T> = std::result::Result<T, DacsError>;

pub(crate) fn invalid_argument(msg: impl Into<String>) -> DacsError {
    DacsError::InvalidArgument(msg.into())
}

pub(crate) fn invalid_state(msg: impl Into<String>) -> DacsError {
    DacsError::InvalidState(msg.into())
}
