use thiserror::Error;

/// Errors raised by the estimators and their supporting kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: wrong shapes, non-finite entries, out-of-range parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical sub-solve failed; `residual` is the last residual norm observed.
    #[error("solver error: {message} (residual {residual:.3e})")]
    Solver { message: String, residual: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
