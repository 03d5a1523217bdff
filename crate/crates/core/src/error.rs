use thiserror::Error;

use crate::solvers::IterTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The denoiser lacks a probe the requested quantity needs.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("f(z) = z/(z-2) has a pole at z = 2")]
    Pole,

    #[error("non-symmetric matrix (max asymmetry {0:e})")]
    NotSymmetric(f64),

    /// A solver iterate became non-finite. The trace holds every record up to the failure.
    #[error("divergence at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<IterTrace>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
