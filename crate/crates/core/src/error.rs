use std::path::{Path, PathBuf};

use crate::autodiff::GraphError;
use crate::maa2c::LearnerError;
use crate::mate::MateError;
use crate::posg::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("metrics file {path}: {detail}")]
    Metrics { path: PathBuf, detail: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Mate(#[from] MateError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
