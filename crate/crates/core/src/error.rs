use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Bad magic or otherwise unrecognizable binary layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("validation error: {0}")]
    Validation(String),

    /// Input outside the mathematical domain of an operation (zero norm, empty image, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {artifact} for {}", ids.join(", "))]
    ArtifactMissing { artifact: String, ids: Vec<String> },

    #[error("remote error (retryable: {retryable}): {message}")]
    Remote { retryable: bool, message: String },

    #[error("unparseable remote response: {message}; raw payload: {raw:?}")]
    RemoteParse { message: String, raw: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
