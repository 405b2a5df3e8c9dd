//! Dense reverse-mode automatic differentiation and the Adam optimizer.
//!
//! A [`Tape`] records primitive applications on 2-D f64 tensors; calling
//! [`Tape::backward`] on a scalar output yields [`Gradients`] for every
//! parameter of the [`ParamStore`] the tape was created from. Each batch
//! gets its own tape; completed tensors are plain values.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_diff_check, EvalPoint, FdOptions, FdReport};
pub use params::{
    Checkpoint, Gradients, ParamId, ParamStore, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss must be scalar, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
