use std::io;

use thiserror::Error;

/// Errors raised by the library and the command line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("size guard exceeded: {0}")]
    Size(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("not orthonormal: Gram deviation {deviation:e} exceeds tolerance {tolerance:e}")]
    NotOrthonormal { deviation: f64, tolerance: f64 },
    #[error("inconsistent evaluation: {0}")]
    Consistency(String),
    #[error("corrupt decomposition: {0}")]
    Corruption(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Feature(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
