use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate record id(s): {}", .0.join(", "))]
    DuplicateIds(Vec<String>),

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("empty vocabulary after document-frequency filtering")]
    EmptyVocabulary,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("optimizer produced a non-finite objective")]
    NonFinite,

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("rule `{id}`: {message}")]
    Rule { id: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// by a failing run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Template(_)
                | Error::UnknownDimension(_)
                | Error::InvalidInput(_)
                | Error::Auth(_)
                | Error::FingerprintMismatch { .. }
                | Error::Rule { .. }
                | Error::EmptyVocabulary
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
