use std::io;

/// Errors produced anywhere in the change-detection toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The input carries no information for the requested operation
    /// (constant raster, identical samples, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("PGM parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("value out of range: {0}")]
    Range(String),

    /// Parallel clustering found no changed pixel, so no minority class
    /// exists to train on.
    #[error("empty minority class: {0}")]
    EmptyMinority(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
