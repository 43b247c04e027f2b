//! Dataset split, training, evaluation, inference and benchmarking.
//!
//! Everything the model sees lives in the object's normalized frame: the
//! template's bounding box is centered and its longest axis scaled to 1, and
//! the same transform is applied to every observation and ground-truth mesh
//! of that object. Reports convert back to metres where a metric is defined
//! at original scale.

mod bench;
mod config;
mod data;
mod eval;
mod model;
mod train;

use std::path::PathBuf;

use crate::mesh::MeshError;
use crate::metrics::MetricError;
use crate::nn::NnError;
use crate::synth::SynthError;

pub use bench::{bench_inference, reference_hz, BenchResult};
pub use config::{Modality, ModelConfig, TrainConfig};
pub use data::{observe, split_dataset, split_unseen, training_items, Item, SequenceContext, Split};
pub use eval::{
    evaluate, evaluate_with, write_report_csv, write_scatter_csv, EvalOptions, Evaluation, MetricsReport, ObjectRow,
    ScatterRow, EVAL_PROTOCOL,
};
pub use model::{loss_and_grads, model_grad_check, ForwardTrace, Model, Observation, RobotReading, TrainSample};
pub use train::{train, EpochLog, TrainOutcome, BEST_CHECKPOINT, TRAIN_LOG};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("modality mismatch: {0}")]
    Modality(String),
    #[error("non-finite {what} at step {step}, object {object}, frame {frame}")]
    NonFinite { what: String, step: usize, object: String, frame: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}
