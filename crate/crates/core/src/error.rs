use thiserror::Error;

/// Errors raised by the polymer machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("site {0:?} lies outside the environment box")]
    OutsideBox(Vec<i32>),
    #[error("not a nearest-neighbour path: {0}")]
    InvalidPath(String),
    #[error("enumeration cap exceeded: n = {n} > {cap} in dimension {dim}")]
    CapExceeded { n: usize, cap: usize, dim: usize },
    #[error("box too small: boundary mass fraction {fraction:e} exceeds {tolerance:e}")]
    BoxTooSmall { fraction: f64, tolerance: f64 },
    #[error("root bracketing failed: {0}")]
    Bracketing(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("identity check failed: {0}")]
    IdentityViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
