use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SonnetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("bad data: {0}")]
    Data(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, SonnetError>;

impl SonnetError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SonnetError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        SonnetError::Parse { path: path.into(), line, msg: msg.into() }
    }
}
