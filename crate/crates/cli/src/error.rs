//! Exit-status convention: 0 success, 1 internal error, 2 bad input.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    BadInput(String),
    Internal(String),
}

impl CliError {
    pub fn bad_input(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::BadInput(msg) | CliError::Internal(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}
