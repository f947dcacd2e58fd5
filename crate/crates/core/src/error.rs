use thiserror::Error;

/// Errors produced by kernel conversion, regression and the flight pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or input violates a documented bound.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Shapes of a model, dataset or query set do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A spectral factorization or matrix solve is numerically ill-posed.
    #[error("ill-conditioned conversion: {0}")]
    Conditioning(String),

    /// A filter sweep produced a non-finite or non-positive innovation variance.
    #[error("filter diverged: {0}")]
    Divergence(String),

    /// The hyperparameter search never produced a finite objective.
    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Dimension(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
