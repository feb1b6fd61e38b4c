//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or grid extents do not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar parameter is outside its valid range (zero focal, bad quaternion, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input is too small or too degenerate for the operation to be well posed.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Non-finite values appeared where the contract requires finite ones.
    #[error("numeric error in layer {layer}: {msg}")]
    Numeric { layer: usize, msg: String },

    /// Invalid model or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Command-line misuse (bad flag combinations, unknown names).
    #[error("usage error: {0}")]
    Usage(String),

    /// The procedural generator could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),

    /// A persisted file does not match the expected schema/version.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
