use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A flag or config value is missing, malformed or out of range.
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// The run completed but at least one criterion failed.
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error(transparent)]
    Core(#[from] hgmrf_core::Error),
}

impl CliError {
    pub const EXIT_VALIDATION: u8 = 1;
    pub const EXIT_USAGE: u8 = 2;

    /// `1` for failed criteria and runtime I/O failures, `2` for bad input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ValidationFailed(_) | CliError::Io { .. } => Self::EXIT_VALIDATION,
            CliError::Core(hgmrf_core::Error::Io(_)) => Self::EXIT_VALIDATION,
            CliError::Usage(_) | CliError::Config { .. } | CliError::Core(_) => Self::EXIT_USAGE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
