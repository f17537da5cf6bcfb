use thiserror::Error;

/// Errors raised by the simulation, assessment, scheduling and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape or dimension mismatch, empty input).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Tabular input could not be read.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    /// The exact two-sided scheduler refuses problems above its epoch cap.
    #[error("exact two-sided solve supports at most {cap} epochs (got {epochs}); use the LB solver")]
    ExactSolveCap { cap: usize, epochs: usize },

    #[error("serialization error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Ingest {
            row,
            column: String::new(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
