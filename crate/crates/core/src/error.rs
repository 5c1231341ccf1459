use thiserror::Error;

/// Errors surfaced while validating inputs or running the fit workflow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{file}:{line}: {rule}")]
    Ingest {
        file: String,
        line: usize,
        rule: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("sampler aborted: {0}")]
    Sampler(String),

    #[error("empty sample store")]
    EmptyStore,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
