use rand::Rng;

use super::{Gradients, ParamId, ParamStore};

/// Loss value plus the kink signature of the evaluation that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub loss: f64,
    pub kinks: u64,
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Number of scalar parameters to check.
    pub samples: usize,
    /// Central-difference half step.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            step: 1e-5,
            tolerance: 1e-6,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    /// Samples discarded because a perturbation crossed a ReLU kink.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    /// Parameter name and element index with the largest error.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Compares analytic gradients against central differences on a seeded
/// subsample of scalar parameters.
///
/// Relative error is `|a - n| / max(|a|, |n|, abs_floor)`. A sample whose
/// perturbed evaluations change the kink signature is discarded and redrawn,
/// so non-differentiable points never enter the comparison.
pub fn finite_diff_check<F>(
    mut eval: F,
    params: &ParamStore,
    analytic: &Gradients,
    opts: &FdOptions,
) -> FdReport
where
    F: FnMut(&ParamStore) -> EvalPoint,
{
    let mut rng = crate::seed::rng(opts.seed);
    let base = eval(params);
    let mut work = params.clone();
    let ids: Vec<ParamId> = params.ids().filter(|&id| !params.get(id).is_empty()).collect();
    let mut report = FdReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
        worst: None,
        passed: true,
    };
    if ids.is_empty() {
        return report;
    }
    let max_attempts = opts.samples * 20 + 10;
    let mut attempts = 0;
    while report.checked < opts.samples && attempts < max_attempts {
        attempts += 1;
        let id = ids[rng.random_range(0..ids.len())];
        let k = rng.random_range(0..params.get(id).len());
        let orig = params.get(id).data()[k];
        work.get_mut(id).data_mut()[k] = orig + opts.step;
        let plus = eval(&work);
        work.get_mut(id).data_mut()[k] = orig - opts.step;
        let minus = eval(&work);
        work.get_mut(id).data_mut()[k] = orig;
        if plus.kinks != base.kinks || minus.kinks != base.kinks {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
        let a = analytic.get(id).data()[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
        if report.worst.is_none() || rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((params.name(id).to_string(), k));
        }
        report.checked += 1;
    }
    report.passed = report.checked == opts.samples && report.max_rel_err < opts.tolerance;
    report
}
