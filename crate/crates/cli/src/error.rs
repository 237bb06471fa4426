use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line tool. Each maps to a stable exit
/// code: 2 configuration, 3 data or IO, 4 propcheck.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config {path}:{line}: {message}")]
    ConfigLine { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] data_agent_core::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("propcheck failed: {0}")]
    Propcheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigLine { .. } => 2,
            CliError::Core(data_agent_core::Error::InvalidArgument(_)) => 2,
            CliError::Io { .. } | CliError::Core(_) | CliError::Parse { .. } => 3,
            CliError::Propcheck(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
