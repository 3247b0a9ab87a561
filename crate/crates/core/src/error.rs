use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("requested {requested} components but only {available} are available")]
    Rank { requested: usize, available: usize },

    #[error("effect size undefined: association scores have zero variance")]
    UndefinedEffect,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("encoder transport: {message}{}", raw.as_ref().map(|r| format!(" (response: {r})")).unwrap_or_default())]
    Transport {
        message: String,
        raw: Option<String>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn transport(msg: impl Into<String>, raw: Option<String>) -> Self {
        Error::Transport {
            message: msg.into(),
            raw,
        }
    }

    /// Process exit code: 1 validation, 2 I/O, 3 sidecar transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Transport { .. } => 3,
            _ => 1,
        }
    }
}
