use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The request is well formed but too large for dense evaluation.
    #[error("infeasible size: {what} needs about {bytes} bytes (limit {limit})")]
    Infeasible { what: String, bytes: u128, limit: u128 },

    #[error("ill-conditioned Gram matrix (m={m}, d={d}): condition estimate {condition:e}")]
    IllConditioned { m: usize, d: f64, condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
