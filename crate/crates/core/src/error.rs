use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region lies entirely outside the frame")]
    LostRegion,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("not enough samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("length mismatch: {left} predictions vs {right} ground-truth boxes")]
    LengthMismatch { left: usize, right: usize },
    #[error("precondition violated: {0}")]
    Contract(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// `fs::read_to_string` with the path attached to any error.
pub fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}
