use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in loss term `{term}`")]
    Numeric { term: String },
    #[error("batch error: {0}")]
    Batch(String),
    #[error("planning error: {0}")]
    Planning(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error("llm client error: {0}")]
    Llm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
