use std::io;

/// Errors produced by the toolkit.
///
/// The variants split into two families that callers (notably the CLI)
/// treat differently: argument/precondition failures, and I/O or parse
/// failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    /// True for I/O and parse failures, false for argument and precondition
    /// failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Parse(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(e) => Error::Io(e),
            other => Error::Parse(other.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
