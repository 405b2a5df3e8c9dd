use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::predict_archs;
use super::PipelineError;
use crate::archspace::{Architecture, EncodingTable, OpCategory, SearchSpace};
use crate::predictor::PredictorState;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub arch_id: String,
    pub predicted_ms: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub ranked: Vec<SearchHit>,
    pub candidates: usize,
    pub feasible: usize,
    /// Wall time spent in predictor calls.
    pub predictor_seconds: f64,
    /// Wall time of filtering and ranking, predictor excluded.
    pub search_seconds: f64,
}

/// Keeps candidates whose calibrated predicted latency is within
/// `constraint_ms`, ranks them by `accuracy` (descending, ties by arch_id)
/// and returns the best `top_k`.
pub fn latency_constrained_search(
    candidates: &[Architecture],
    accuracy: &(dyn Fn(&Architecture) -> f64 + Sync),
    state: &PredictorState,
    device: &str,
    constraint_ms: f64,
    top_k: usize,
    encodings: Option<&EncodingTable>,
) -> Result<SearchResult, PipelineError> {
    let cal = *state
        .calibration
        .get(device)
        .ok_or_else(|| PipelineError::Uncalibrated(device.to_string()))?;
    let refs: Vec<&Architecture> = candidates.iter().collect();
    let t0 = Instant::now();
    let scores = predict_archs(state, device, &refs, encodings)?;
    let predictor_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut feasible: Vec<SearchHit> = candidates
        .iter()
        .zip(&scores)
        .map(|(a, &s)| (a, cal.apply(s)))
        .filter(|&(_, ms)| ms <= constraint_ms)
        .map(|(a, ms)| SearchHit { arch_id: a.arch_id().to_string(), predicted_ms: ms, accuracy: accuracy(a) })
        .collect();
    if feasible.is_empty() {
        return Err(PipelineError::EmptyFeasibleSet { constraint_ms });
    }
    let n_feasible = feasible.len();
    feasible.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.arch_id.cmp(&b.arch_id)));
    feasible.truncate(top_k);
    let search_seconds = t1.elapsed().as_secs_f64();
    Ok(SearchResult {
        ranked: feasible,
        candidates: candidates.len(),
        feasible: n_feasible,
        predictor_seconds,
        search_seconds,
    })
}

/// Stand-in accuracy in [60, 90): mostly a hash of the arch_id, nudged up
/// by the share of convolution slots.
pub fn synthetic_accuracy(arch: &Architecture, space: &SearchSpace) -> f64 {
    let u = (seed::derive(0, arch.arch_id()) >> 11) as f64 / (1u64 << 53) as f64;
    let conv = arch.ops().iter().filter(|&&o| space.ops[o].category == OpCategory::Conv).count() as f64
        / arch.ops().len().max(1) as f64;
    60.0 + 30.0 * (0.8 * u + 0.2 * conv)
}
