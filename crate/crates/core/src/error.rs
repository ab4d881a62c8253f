use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("conversion table has no entry for {0}")]
    MissingKey(String),

    #[error("model is not trained")]
    Untrained,

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("internal fault: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
