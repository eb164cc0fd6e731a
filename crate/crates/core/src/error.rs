use thiserror::Error;

/// Error categories shared by every module; the CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, schedules, grids or experiment settings.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is malformed or unsuitable.
    #[error("data error: {0}")]
    Data(String),
    /// A run failed after it started (all runs excluded, worker failure).
    #[error("runtime failure: {0}")]
    Runtime(String),
    /// Training produced non-finite parameters or losses.
    #[error("diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn data<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}
