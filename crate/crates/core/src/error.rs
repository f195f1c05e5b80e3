use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("missing checkpoint for variant `{variant}` at {path}")]
    MissingCheckpoint { variant: String, path: String },

    #[error("world {world} faulted: {source}")]
    World { world: usize, source: Box<Error> },

    #[error("trial with seed {seed} faulted: {source}")]
    Trial { seed: u64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFault(msg.into())
    }
}
