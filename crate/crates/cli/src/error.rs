use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nlse_pdf::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("field file {path}: {reason}")]
    Field { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for bad input, 3 for a numerical guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Json(_) | CliError::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
