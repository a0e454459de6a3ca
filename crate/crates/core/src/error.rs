use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("no pulse found: {0}")]
    NoPulseFound(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
