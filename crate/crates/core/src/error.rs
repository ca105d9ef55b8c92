use thiserror::Error;

/// Errors raised by the detection, bound and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid sensor spec: {0}")]
    InvalidSensor(String),

    #[error("invalid cluster spec: {0}")]
    InvalidCluster(String),

    #[error("invalid system spec: {0}")]
    InvalidSystem(String),

    #[error("measurement vector has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{what} of size {size} exceeds the exact enumeration cap {cap}; use the bound instead")]
    AboveCap {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("lambert W0 is undefined for x = {0} < -1/e")]
    LambertDomain(f64),

    #[error("malformed bound input: {0}")]
    BoundInput(String),

    #[error("system is not homogeneous: {0}")]
    NotHomogeneous(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
