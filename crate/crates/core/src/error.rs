use std::path::PathBuf;

/// Errors surfaced by the engine's public API.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected} joints, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{path}: {field}: {message}")]
    File {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("log version mismatch: log written by {log}, this engine is {engine}")]
    VersionMismatch { log: String, engine: String },

    /// A scenario that parses but cannot run as written.
    #[error("scenario: {0}")]
    Scenario(String),

    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, field: impl Into<String>, msg: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            field: field.into(),
            message: msg.to_string(),
        }
    }
}

impl Error {
    /// Process exit code for the CLI: 2 input, 3 environment, 4 scenario
    /// semantics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Bind { .. } => 3,
            Error::Scenario(_) | Error::VersionMismatch { .. } => 4,
            Error::Io(e) if e.kind() != std::io::ErrorKind::NotFound => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
