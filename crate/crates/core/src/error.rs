use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Each variant belongs to a stable error class; the CLI maps classes to
/// exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical consistency: {0}")]
    Numerical(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported MRC mode {mode} in {path} (only mode 2 is accepted)")]
    UnsupportedMode { path: PathBuf, mode: i32 },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error class.
    ///
    /// | code | class |
    /// |------|-------|
    /// | 3 | invalid input |
    /// | 4 | i/o |
    /// | 5 | format |
    /// | 6 | unsupported MRC mode |
    /// | 7 | corrupt file |
    /// | 8 | numerical consistency |
    ///
    /// Code 2 is reserved for command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 3,
            Error::Io { .. } => 4,
            Error::Format { .. } => 5,
            Error::UnsupportedMode { .. } => 6,
            Error::Corrupt { .. } => 7,
            Error::Numerical(_) => 8,
        }
    }
}
