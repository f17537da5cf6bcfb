use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A configuration field failed validation; `field` is its dotted path.
    #[error("invalid configuration: {field}: {message}")]
    Validation { field: String, message: String },

    /// A command input (log, timeline, data file) is missing or unusable.
    #[error("invalid input {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] fedshap_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 1 for anything caused by the user's inputs, 3 for failures of the tool itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::Input { .. } => 1,
            Self::Core(fedshap_core::Error::Io(_)) => 3,
            Self::Core(_) => 1,
            Self::Io { .. } | Self::Internal(_) => 3,
        }
    }
}
