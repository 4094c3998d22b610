use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },

    #[error("label `{label}` has {available} examples, {needed} needed")]
    InsufficientExamples {
        label: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid template: {0}")]
    Template(String),

    #[error("invalid provider configuration: {0}")]
    Config(String),

    #[error("request failed: {0}")]
    Transport(String),

    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed response: {0}")]
    Response(String),

    #[error("token position {position}, subset {subset}: {source}")]
    AtPosition {
        position: usize,
        subset: String,
        #[source]
        source: Box<ProviderError>,
    },

    #[error(transparent)]
    Core(#[from] dpsyn_core::Error),
}

pub type Result<T> = std::result::Result<T, ProviderError>;
