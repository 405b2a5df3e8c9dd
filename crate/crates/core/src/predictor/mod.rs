//! The latency predictor.
//!
//! Each architecture is lowered to a [`SlotGraph`](crate::archspace::SlotGraph).
//! Per node, the operation embedding is concatenated with the device's
//! hardware embedding and refined by a small DGF network plus a per-node MLP.
//! The refined features gate the main DGF and GAT stacks, whose readouts are
//! averaged, optionally concatenated with a supplementary encoding, and fed
//! to an MLP head that emits one score. Scores are ranking scores, not
//! milliseconds; a per-device [`Calibration`] maps them to ms when needed.

mod config;
mod layers;
mod model;

pub use config::{GnnKind, PredictorConfig, Readout};
pub use layers::{dgf_layer, dgf_on_tape, gat_layer, gat_on_tape, DgfVars, DgfWeights, GatOutput, GatVars, GatWeights};
pub use model::{init_predictor, Batch, Calibration, ForwardVars, PredictorState, Trace};

use crate::archspace::ArchError;
use crate::autodiff::AutodiffError;
use crate::devicesets::DeviceError;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("invalid predictor config: {0}")]
    InvalidConfig(String),
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error("device {0:?} registered twice")]
    DuplicateDevice(String),
    #[error("unknown search space {0:?}")]
    UnknownSpace(String),
    #[error("a batch must hold architectures of one search space")]
    MixedSpaces,
    #[error("supplementary input: expected {expected}, found {found}")]
    BadSupplementaryDim { expected: usize, found: usize },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(String),
}
