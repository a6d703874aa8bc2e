use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("image too small: {width}x{height} cannot hold {levels} pyramid levels")]
    ImageTooSmall { width: usize, height: usize, levels: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("initialization failed: {0}")]
    InitializationFailed(String),

    #[error("solver failed: {0}")]
    SolverFailed(String),

    #[error("tracking failed at frame {frame}: {reason}")]
    TrackingFailed { frame: usize, reason: String },

    #[error("evaluation undefined: {0}")]
    Undefined(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at {path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("path error: {}: {message}", path.display())]
    Path { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] ::image::ImageError),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
