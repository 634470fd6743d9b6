use std::io;

use thiserror::Error;

pub type Result<T, E = AaeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AaeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("capacity error: assembled vector needs length {required} but max_len is {max_len}")]
    Capacity { required: usize, max_len: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl AaeError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        AaeError::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        AaeError::Shape(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        AaeError::Parse {
            line,
            message: msg.into(),
        }
    }
}
