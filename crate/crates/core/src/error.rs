use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed manifest line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("image for record {0:?} does not resolve to a readable file")]
    MissingImage(String),

    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("scaled label refers to unknown meme {0:?}")]
    UnknownMeme(String),

    #[error("score {0} is outside the 0-9 scale")]
    OutOfRange(i64),

    #[error("records contain only one class")]
    SingleClass,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}
