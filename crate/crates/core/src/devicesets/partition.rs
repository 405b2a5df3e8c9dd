//! Kernighan-Lin bisection of the device correlation graph and the pruning
//! loop that trims both sides to requested sizes.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spearman, DeviceError, LatencyTable};

/// Spearman correlation between every device pair over the archs both
/// devices measured. Diagonal is 1.
pub fn correlation_matrix(table: &LatencyTable, devices: &[String]) -> Result<Vec<Vec<f64>>, DeviceError> {
    let n = devices.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64, DeviceError>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let shared = table.shared_archs(&[&devices[i], &devices[j]]);
            if shared.len() < 2 {
                return Err(DeviceError::InsufficientOverlap {
                    a: devices[i].clone(),
                    b: devices[j].clone(),
                    shared: shared.len(),
                });
            }
            let x: Vec<f64> = shared.iter().map(|a| table.get(a, &devices[i]).unwrap_or(0.0)).collect();
            let y: Vec<f64> = shared.iter().map(|a| table.get(a, &devices[j]).unwrap_or(0.0)).collect();
            spearman(&x, &y)
        })
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Complete graph over devices with edge weight = -correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGraph {
    pub devices: Vec<String>,
    weights: Vec<Vec<f64>>,
}

impl CorrelationGraph {
    pub fn from_correlations(devices: Vec<String>, corr: &[Vec<f64>]) -> Self {
        let n = devices.len();
        let weights = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { -corr[i][j] }).collect())
            .collect();
        Self { devices, weights }
    }

    /// Graph with explicit edge weights (diagonal ignored).
    pub fn from_weights(devices: Vec<String>, mut weights: Vec<Vec<f64>>) -> Self {
        for (i, row) in weights.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        Self { devices, weights }
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    /// Total edge weight inside the two sides; the quantity bisection minimizes.
    pub fn intra_weight(&self, side_a: &[usize], side_b: &[usize]) -> f64 {
        let inner = |s: &[usize]| {
            let mut t = 0.0;
            for (k, &i) in s.iter().enumerate() {
                for &j in &s[k + 1..] {
                    t += self.weights[i][j];
                }
            }
            t
        };
        inner(side_a) + inner(side_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Device indices, sorted.
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
    /// Intra-group weight of the result.
    pub objective: f64,
    /// Objective after each applied pass of the winning restart, starting
    /// with the initial partition.
    pub pass_objectives: Vec<f64>,
}

const KL_RESTARTS: usize = 8;
const GAIN_EPS: f64 = 1e-12;

/// Balanced bipartition (sizes differ by at most one) minimizing the
/// intra-group weight. With weights = -correlation this keeps strongly
/// correlated devices together and leaves little correlation across sides.
///
/// Classic pass-based Kernighan-Lin from several seeded random starts; odd
/// vertex counts are padded with a zero-weight phantom that is dropped from
/// the result.
pub fn kl_bisect(graph: &CorrelationGraph, seed: u64) -> Result<Bisection, DeviceError> {
    let real = graph.len();
    if real < 2 {
        return Err(DeviceError::TooFewDevices(real));
    }
    let n = real + real % 2;
    let w = |i: usize, j: usize| if i < real && j < real { graph.weight(i, j) } else { 0.0 };
    let mut rng = crate::seed::rng(seed);

    let mut best: Option<Bisection> = None;
    for _ in 0..KL_RESTARTS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut in_a = vec![false; n];
        for &v in &order[..n / 2] {
            in_a[v] = true;
        }
        let objective = |in_a: &[bool]| {
            let mut t = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if in_a[i] == in_a[j] {
                        t += w(i, j);
                    }
                }
            }
            t
        };
        let mut trace = vec![objective(&in_a)];
        loop {
            // One pass: tentatively swap the best unlocked pair until one side is exhausted.
            let mut cur = in_a.clone();
            let mut locked = vec![false; n];
            let mut swaps = Vec::new();
            let mut gains = Vec::new();
            for _ in 0..n / 2 {
                // D_v = internal - external weight of v under the current tentative partition.
                let d: Vec<f64> = (0..n)
                    .map(|v| {
                        (0..n)
                            .filter(|&u| u != v)
                            .map(|u| if cur[u] == cur[v] { w(v, u) } else { -w(v, u) })
                            .sum()
                    })
                    .collect();
                let mut pick: Option<(f64, usize, usize)> = None;
                for a in (0..n).filter(|&a| cur[a] && !locked[a]) {
                    for b in (0..n).filter(|&b| !cur[b] && !locked[b]) {
                        let g = d[a] + d[b] + 2.0 * w(a, b);
                        if pick.is_none_or(|(bg, _, _)| g > bg + GAIN_EPS) {
                            pick = Some((g, a, b));
                        }
                    }
                }
                let Some((g, a, b)) = pick else { break };
                cur[a] = false;
                cur[b] = true;
                locked[a] = true;
                locked[b] = true;
                swaps.push((a, b));
                gains.push(g);
            }
            let mut best_k = 0;
            let mut best_gain = 0.0;
            let mut run = 0.0;
            for (k, g) in gains.iter().enumerate() {
                run += g;
                if run > best_gain + GAIN_EPS {
                    best_gain = run;
                    best_k = k + 1;
                }
            }
            if best_k == 0 {
                break;
            }
            for &(a, b) in &swaps[..best_k] {
                in_a[a] = false;
                in_a[b] = true;
            }
            trace.push(objective(&in_a));
        }
        let side_a: Vec<usize> = (0..real).filter(|&v| in_a[v]).collect();
        let side_b: Vec<usize> = (0..real).filter(|&v| !in_a[v]).collect();
        let obj = graph.intra_weight(&side_a, &side_b);
        if best.as_ref().is_none_or(|b| obj < b.objective - GAIN_EPS) {
            best = Some(Bisection {
                side_a,
                side_b,
                objective: obj,
                pass_objectives: trace,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Final source/target device lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSplit {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Mean source-target Spearman correlation of the final split.
    pub objective: f64,
}

impl DeviceSplit {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.source.is_empty() || self.target.is_empty() {
            return Err(DeviceError::Parse("split sides must be non-empty".into()));
        }
        if let Some(d) = self.source.iter().find(|d| self.target.contains(d)) {
            return Err(DeviceError::Parse(format!("device {d} is on both sides")));
        }
        if !self.objective.is_finite() {
            return Err(DeviceError::Parse("objective must be finite".into()));
        }
        Ok(())
    }
}

/// Mean correlation across two index sets.
pub fn mean_cross_correlation(corr: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let mut t = 0.0;
    for &i in a {
        for &j in b {
            t += corr[i][j];
        }
    }
    t / (a.len() * b.len()).max(1) as f64
}

/// Trims the two sides to exactly (m, n): while a side is oversized, drop
/// its device with the largest summed correlation to the other side
/// (lowest index on ties). Returns the surviving index lists.
pub fn prune_indices(
    side_a: &[usize],
    side_b: &[usize],
    m: usize,
    n: usize,
    corr: &[Vec<f64>],
) -> Result<(Vec<usize>, Vec<usize>), DeviceError> {
    if side_a.len() < m || side_b.len() < n || m == 0 || n == 0 {
        return Err(DeviceError::SideTooSmall {
            have: (side_a.len(), side_b.len()),
            want: (m, n),
        });
    }
    let mut l = side_a.to_vec();
    let mut r = side_b.to_vec();
    fn remove_max(from: &mut Vec<usize>, other: &[usize], corr: &[Vec<f64>]) {
        let score = |i: usize| other.iter().map(|&j| corr[i][j]).sum::<f64>();
        let mut best = 0;
        for k in 1..from.len() {
            let (sk, sb) = (score(from[k]), score(from[best]));
            if sk > sb || (sk == sb && from[k] < from[best]) {
                best = k;
            }
        }
        from.remove(best);
    }
    while l.len() != m || r.len() != n {
        if l.len() > m {
            remove_max(&mut l, &r, corr);
        }
        if r.len() > n {
            remove_max(&mut r, &l, corr);
        }
    }
    Ok((l, r))
}

/// Named-device form of [`prune_indices`].
pub fn prune_to_sizes(
    bisection: &Bisection,
    devices: &[String],
    m: usize,
    n: usize,
    corr: &[Vec<f64>],
) -> Result<DeviceSplit, DeviceError> {
    let (l, r) = prune_indices(&bisection.side_a, &bisection.side_b, m, n, corr)?;
    Ok(DeviceSplit {
        source: l.iter().map(|&i| devices[i].clone()).collect(),
        target: r.iter().map(|&i| devices[i].clone()).collect(),
        objective: mean_cross_correlation(corr, &l, &r),
    })
}

/// Full partitioning: correlations, bisection, then pruning. The larger
/// bisection side serves the larger request.
pub fn partition_devices(
    table: &LatencyTable,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<DeviceSplit, DeviceError> {
    let devices = table.devices();
    if m + n > devices.len() {
        return Err(DeviceError::SideTooSmall {
            have: (devices.len().div_ceil(2), devices.len() / 2),
            want: (m, n),
        });
    }
    let corr = correlation_matrix(table, &devices)?;
    let graph = CorrelationGraph::from_correlations(devices.clone(), &corr);
    let mut bis = kl_bisect(&graph, seed)?;
    if (bis.side_a.len() < m || bis.side_b.len() < n) && bis.side_b.len() >= m && bis.side_a.len() >= n {
        std::mem::swap(&mut bis.side_a, &mut bis.side_b);
    }
    prune_to_sizes(&bis, &devices, m, n, &corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn two_devices_become_singletons() {
        let g = CorrelationGraph::from_correlations(names(2), &[vec![1.0, 0.3], vec![0.3, 1.0]]);
        let b = kl_bisect(&g, 0).unwrap();
        assert_eq!((b.side_a.len(), b.side_b.len()), (1, 1));
        assert!(kl_bisect(&CorrelationGraph::from_weights(names(1), vec![vec![0.0]]), 0).is_err());
    }

    #[test]
    fn correlated_pairs_stay_together() {
        // pairs (0,1) and (2,3) perfectly correlated: weight -1 inside, 0 across
        let mut w = vec![vec![0.0; 4]; 4];
        w[0][1] = -1.0;
        w[1][0] = -1.0;
        w[2][3] = -1.0;
        w[3][2] = -1.0;
        let g = CorrelationGraph::from_weights(names(4), w);
        // exhaustive optimum over the 3 balanced bipartitions
        let cands = [(vec![0, 1], vec![2, 3]), (vec![0, 2], vec![1, 3]), (vec![0, 3], vec![1, 2])];
        let best = cands
            .iter()
            .map(|(a, b)| g.intra_weight(a, b))
            .fold(f64::INFINITY, f64::min);
        let b = kl_bisect(&g, 3).unwrap();
        assert_eq!(b.objective, best);
        assert_eq!(best, -2.0);
        let mut sides = [b.side_a.clone(), b.side_b.clone()];
        sides.sort();
        assert_eq!(sides, [vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn odd_counts_are_balanced() {
        let n = 7;
        let mut rng = crate::seed::rng(1);
        let w: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| w[i.min(j)][i.max(j)]).collect()).collect();
        let b = kl_bisect(&CorrelationGraph::from_weights(names(n), w), 9).unwrap();
        assert_eq!(b.side_a.len() + b.side_b.len(), n);
        assert!(b.side_a.len().abs_diff(b.side_b.len()) <= 1);
    }

    #[test]
    fn passes_are_monotone() {
        let n = 12;
        let mut rng = crate::seed::rng(2);
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rand::Rng::random_range(&mut rng, -1.0..1.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        let b = kl_bisect(&CorrelationGraph::from_weights(names(n), w), 4).unwrap();
        for pair in b.pass_objectives.windows(2) {
            assert!(pair[1] < pair[0], "{:?}", b.pass_objectives);
        }
    }

    #[test]
    fn prune_unchanged_when_sized() {
        let corr = vec![vec![1.0; 4]; 4];
        let (l, r) = prune_indices(&[0, 1], &[2, 3], 2, 2, &corr).unwrap();
        assert_eq!((l, r), (vec![0, 1], vec![2, 3]));
        assert!(matches!(
            prune_indices(&[0, 1], &[2, 3], 3, 1, &corr),
            Err(DeviceError::SideTooSmall { .. })
        ));
    }

    #[test]
    fn prune_removes_most_correlated_first() {
        // side A = {0,1,2}, side B = {3}; device 1 correlates 0.99 with 3
        let mut corr = vec![vec![0.0; 4]; 4];
        for (i, row) in corr.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        corr[1][3] = 0.99;
        corr[3][1] = 0.99;
        corr[0][3] = 0.2;
        corr[3][0] = 0.2;
        let (l, _) = prune_indices(&[0, 1, 2], &[3], 2, 1, &corr).unwrap();
        assert_eq!(l, vec![0, 2]);
        let (l, _) = prune_indices(&[0, 1, 2], &[3], 1, 1, &corr).unwrap();
        assert_eq!(l, vec![2]);
    }
}
