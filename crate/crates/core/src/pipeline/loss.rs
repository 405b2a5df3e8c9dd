use crate::autodiff::{Tape, Tensor, Var};

use super::PipelineError;

fn ordered_pairs(targets: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..targets.len() {
        for j in 0..targets.len() {
            if targets[i] > targets[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Mean over ordered pairs with `t_i > t_j` of `max(0, margin - (p_i - p_j))`.
/// Zero when all targets tie.
pub fn pairwise_hinge_loss(preds: &[f64], targets: &[f64], margin: f64) -> Result<f64, PipelineError> {
    check(preds.len(), targets.len())?;
    let pairs = ordered_pairs(targets);
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pairs.iter().map(|&(i, j)| (margin - (preds[i] - preds[j])).max(0.0)).sum();
    Ok(total / pairs.len() as f64)
}

fn check(np: usize, nt: usize) -> Result<(), PipelineError> {
    if np != nt {
        return Err(PipelineError::LengthMismatch(np, nt));
    }
    if np < 2 {
        return Err(PipelineError::TooFewSamples(np));
    }
    Ok(())
}

/// Tape version of [`pairwise_hinge_loss`] on a column of predictions.
pub fn hinge_on_tape(tape: &mut Tape<'_>, preds: Var, targets: &[f64], margin: f64) -> Result<Var, PipelineError> {
    let [rows, cols] = tape.value(preds).shape();
    if cols != 1 {
        return Err(PipelineError::LengthMismatch(rows * cols, targets.len()));
    }
    check(rows, targets.len())?;
    let pairs = ordered_pairs(targets);
    if pairs.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    // row k of d selects p_j - p_i for pair k
    let mut d = Tensor::zeros(pairs.len(), rows);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        d.set(k, i, -1.0);
        d.set(k, j, 1.0);
    }
    let dv = tape.constant(d);
    let neg_diff = tape.matmul(dv, preds)?;
    let shifted = tape.add_scalar(neg_diff, margin);
    let h = tape.relu(shifted);
    Ok(tape.mean(h))
}
