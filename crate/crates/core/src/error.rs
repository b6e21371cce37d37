use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("decode error in {file}: {message}")]
    Decode { file: String, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported checkpoint version {found} (reader supports {supported})")]
    Version { found: u32, supported: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("tool `{tool}` failed: {message}")]
    Tool { tool: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("busy: {0}")]
    Busy(String),

    #[error("planner transport error: {0}")]
    Transport(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn decode(file: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Decode {
            file: file.to_string(),
            message: message.into(),
        }
    }

    pub fn tool(tool: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Tool {
            tool: tool.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable code, shared by the HTTP API and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Decode { .. } => "decode",
            Error::Integrity(_) => "integrity",
            Error::Version { .. } => "version",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Numeric(_) => "numeric",
            Error::Index { .. } => "index",
            Error::Precondition(_) => "precondition",
            Error::Tool { .. } => "tool",
            Error::Parse(_) => "parse",
            Error::NotFound(_) => "not_found",
            Error::Busy(_) => "busy",
            Error::Transport(_) => "transport",
            Error::Io { .. } => "io",
        }
    }
}
