use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented precondition or type invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration file is unreadable, malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A data file could not be parsed. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// An iterative fit did not converge within its iteration budget.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
