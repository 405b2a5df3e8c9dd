//! Latency tables, rank correlation between devices and source/target
//! device-set partitioning.

mod partition;
mod spearman;
mod table;

pub use partition::{
    correlation_matrix, kl_bisect, mean_cross_correlation, partition_devices, prune_indices,
    prune_to_sizes, Bisection, CorrelationGraph, DeviceSplit,
};
pub use spearman::{average_ranks, spearman};
pub use table::{LatencyRecord, LatencyTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired values, got {0}")]
    TooShort(usize),
    #[error("rank correlation undefined: constant input")]
    ConstantInput,
    #[error("devices {a} and {b} share only {shared} architectures")]
    InsufficientOverlap { a: String, b: String, shared: usize },
    #[error("need at least 2 devices to bisect, got {0}")]
    TooFewDevices(usize),
    #[error("sides of sizes {have:?} cannot be pruned to {want:?}")]
    SideTooSmall { have: (usize, usize), want: (usize, usize) },
    #[error("latency for ({arch_id}, {device_id}) must be positive and finite, got {value}")]
    BadLatency { arch_id: String, device_id: String, value: f64 },
    #[error("duplicate record for ({arch_id}, {device_id})")]
    DuplicateRecord { arch_id: String, device_id: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}
