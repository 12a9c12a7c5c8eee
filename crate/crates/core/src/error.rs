use thiserror::Error;

/// Errors raised while building models or running solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("solver did not converge after {iterations} iterations; last prices {tail:?}")]
    NoConvergence {
        iterations: usize,
        tail: Vec<(f64, f64)>,
    },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
