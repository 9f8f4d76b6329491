use std::path::PathBuf;

/// Errors produced by the core image, prior, synthesis and dehazing routines.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("image format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numeric guard: {0}")]
    NumericGuard(String),
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
