use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors surfaced by the command-line layer.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kernvim_core::Error),
    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn file(path: &Path, message: impl Into<String>) -> Self {
        CliError::File { path: path.to_path_buf(), message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    /// 2 for bad input, 3 for degenerate data, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(kernvim_core::Error::Degenerate(_)) => 3,
            CliError::Core(kernvim_core::Error::Numerical(_)) => 4,
            CliError::Core(kernvim_core::Error::Input(_)) | CliError::File { .. } | CliError::Usage(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
