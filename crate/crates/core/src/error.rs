use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: cannot parse time field `{field}`: {reason}")]
    Parse {
        line: u64,
        field: String,
        reason: String,
    },

    #[error("time value out of range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no records could be parsed ({rejected} rejected)")]
    EmptyInput { rejected: u64 },

    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },

    #[error("{kind} `{id}` already exists")]
    Conflict { kind: &'static str, id: String },

    #[error("`{id}` is a {found}, expected a {expected}")]
    KindMismatch {
        id: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("corrupted store entry {}: {reason}", path.display())]
    Corruption { path: PathBuf, reason: String },

    #[error("cannot connect to {addr}: {source}")]
    Connection {
        addr: String,
        #[source]
        source: io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("clock failure: {0}")]
    Clock(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Range(_) => "range",
            Error::Config(_) => "config",
            Error::EmptyInput { .. } => "empty_input",
            Error::NotFound { .. } => "not_found",
            Error::Conflict { .. } => "conflict",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::Corruption { .. } => "corruption",
            Error::Connection { .. } => "connection",
            Error::Invariant(_) => "invariant",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Clock(_) => "clock",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
