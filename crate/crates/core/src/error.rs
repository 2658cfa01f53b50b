use thiserror::Error;

#[derive(Debug, Error)]
pub enum EndoError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("inadmissible transition: {0}")]
    Inadmissible(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid measure data: {0}")]
    InvalidMeasure(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, EndoError>;
