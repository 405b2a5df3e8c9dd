//! Few-shot hardware latency prediction for neural architecture search.
//!
//! The crate covers the whole pipeline: search-space definitions and
//! encodings ([`archspace`]), a small reverse-mode AD engine ([`autodiff`]),
//! the graph latency predictor ([`predictor`]), architecture samplers
//! ([`sampler`]), device-correlation analysis and partitioning
//! ([`devicesets`]), training / transfer / evaluation ([`pipeline`]) and a
//! synthetic device oracle ([`synthbench`]).

pub mod archspace;
pub mod autodiff;
pub mod devicesets;
pub mod pipeline;
pub mod predictor;
pub mod sampler;
pub mod seed;
pub mod synthbench;
