use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Schema or run configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file does not carry the columns the schema expects.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A data file is structurally broken (bad CSV, bad JSON, bad values).
    #[error("invalid data in {context}: {message}")]
    Data { context: String, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("unknown region code {0}")]
    UnknownRegion(String),

    #[error("layout error: {0}")]
    Layout(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("model error: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Data {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
