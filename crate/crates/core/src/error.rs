use thiserror::Error;

use crate::spd::SpdPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: bad dimensions, non-finite entries, invalid parameters.
    #[error("invalid input: {0}")]
    Input(String),

    /// An eigenvalue fell outside the domain of a spectral function.
    #[error("eigenvalue {eigenvalue:e} outside the domain of {function}")]
    Domain { function: &'static str, eigenvalue: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    Numerical { what: &'static str, residual: f64 },

    #[error("matrix {index}: {reason}")]
    Data { index: usize, reason: String },

    /// Byte-level or line-level problem in an on-disk format.
    #[error("format error at offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("fitted model invalid at b = {batch}: denominator {denominator:e} is not positive")]
    FitDomain { batch: f64, denominator: f64 },

    #[error("run failed at step {step}: {source}")]
    Run {
        step: usize,
        last_good: Box<SpdPoint>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
