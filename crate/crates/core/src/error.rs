use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("invalid class map: {0}")]
    ClassMap(String),

    #[error("class id {class_id} out of range for {class_count} classes")]
    ClassOutOfRange { class_id: u8, class_count: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("band mismatch: expected {expected} bands, got {actual}")]
    BandMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance bank is empty")]
    EmptyBank,

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("bank error: {0}")]
    Bank(String),

    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("split failed: {0}")]
    Split(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { context: context.into(), message: message.into() }
    }
}
