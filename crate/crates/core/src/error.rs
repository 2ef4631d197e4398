use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{format}: {message} (at byte offset {offset})")]
    Format {
        format: &'static str,
        offset: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("autograd: {0}")]
    Autograd(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(format: &'static str, offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            offset,
            message: message.into(),
        }
    }

    /// Whether the error stems from bad user input rather than an internal fault.
    /// The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Autograd(_))
    }
}
