//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A precondition or contract violation described by the message.
    #[error("{0}")]
    Invalid(String),

    #[error("speaker {0} is not annotated")]
    Unannotated(String),

    #[error("annotation store is locked by another process ({0})")]
    Locked(String),

    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
