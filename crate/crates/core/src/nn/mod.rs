//! Small differentiable-computation substrate: tensors, a reverse-mode tape,
//! dense/conv/attention layers, Adam with a cosine schedule, gradient checks
//! and a binary checkpoint format.

mod checkpoint;
pub mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

use std::path::{Path, PathBuf};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use graph::{Backward, Graph, Var};
pub use layers::{attention, dense_forward, Activation, AttentionBlock, Conv1d, Dense};
pub use params::{cosine_lr, AdamConfig, Grads, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl NnError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        NnError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
