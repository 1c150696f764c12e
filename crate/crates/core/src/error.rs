use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing channel variance for link {0}")]
    MissingLink(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
