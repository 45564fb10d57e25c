use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("prefix length {l} out of range 1..={horizon}")]
    Range { l: usize, horizon: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("training diverged at step {step}: {detail}")]
    Training { step: usize, detail: String },

    #[error("model file {path} not found; create it with `aac train --out {path}`", path = .path.display())]
    MissingModel { path: PathBuf },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
