use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A computation produced a non-finite or degenerate quantity.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Line detection found nothing measurable in the image.
    #[error("no lines detected")]
    NoLinesDetected,
    /// Too few samples to compute a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
