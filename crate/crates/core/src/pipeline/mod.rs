//! Pretraining, few-shot transfer, evaluation and latency-constrained search.

mod eval;
mod loss;
mod search;
mod train;

pub use eval::{evaluate, evaluate_with, predict_archs, scatter, EvalEntry, EvalReport, Scatter};
pub use loss::{hinge_on_tape, pairwise_hinge_loss};
pub use search::{latency_constrained_search, synthetic_accuracy, SearchHit, SearchResult};
pub use train::{index_archs, pretrain, transfer, ArchIndex, TrainConfig, TrainLog, TransferLog};

use crate::autodiff::AutodiffError;
use crate::devicesets::DeviceError;
use crate::predictor::PredictorError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("device {device:?} has {have} measurements, need {need}")]
    InsufficientData { device: String, have: usize, need: usize },
    #[error("latency table references unknown architecture {0:?}")]
    UnknownArch(String),
    #[error("no supplementary encoding for {0:?}")]
    MissingEncoding(String),
    #[error("no score calibration for device {0:?}; run a transfer first")]
    Uncalibrated(String),
    #[error("no candidate is predicted within {constraint_ms} ms")]
    EmptyFeasibleSet { constraint_ms: f64 },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("io error: {0}")]
    Io(String),
}
