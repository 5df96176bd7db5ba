use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Operator too close to singular for an inverse square root.
    #[error(
        "not strictly positive: minimum eigenvalue {min_eigenvalue:e} <= {threshold:e} (trace {trace:e}, condition {condition:e})"
    )]
    NotStrictlyPositive { min_eigenvalue: f64, threshold: f64, trace: f64, condition: f64 },

    #[error("incompatible operators: {0}")]
    Incompatible(String),

    #[error("invalid model parameters: {0}")]
    InvalidModel(String),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}
