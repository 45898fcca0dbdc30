use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The logarithm is ambiguous for rotations at or near pi.
    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    LogDomain { angle: f64 },

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    /// Derivatives were requested before the closed-form plane step ran.
    #[error("factor {factor} has no current plane estimate")]
    NotEstimated { factor: usize },

    #[error("damped Hessian block of pose {pose} is not positive definite")]
    Factorization { pose: usize },

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
