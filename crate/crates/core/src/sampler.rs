//! Choosing which architectures to measure on a target device.
//!
//! Every sampler works on a canonical view of the pool: ids sorted
//! lexicographically, then a seeded permutation that decides ties. Results
//! therefore do not depend on the order the pool was given in.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::{graph_proxies, ArchError, Architecture, EncodingTable, SearchSpace, PARAMS_FEATURE};
use crate::devicesets::LatencyTable;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("pool has {have} architectures, {want} requested")]
    PoolTooSmall { have: usize, want: usize },
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("pool lists {0:?} more than once")]
    DuplicateId(String),
    #[error("no encoding for {0:?}")]
    MissingEncoding(String),
    #[error("no reference device covers the whole pool (first gap: {0:?})")]
    MissingReference(String),
    #[error("all encodings are identical; cannot form {0} clusters")]
    DegenerateEncoding(usize),
    #[error("unknown sampler {0:?}; valid methods: random, params, cosine, kmeans, latency_oracle")]
    UnknownMethod(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}

type Result<T> = std::result::Result<T, SamplerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Random,
    Params,
    Cosine,
    Kmeans,
    LatencyOracle,
}

impl SampleMethod {
    pub const ALL: [SampleMethod; 5] = [
        SampleMethod::Random,
        SampleMethod::Params,
        SampleMethod::Cosine,
        SampleMethod::Kmeans,
        SampleMethod::LatencyOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleMethod::Random => "random",
            SampleMethod::Params => "params",
            SampleMethod::Cosine => "cosine",
            SampleMethod::Kmeans => "kmeans",
            SampleMethod::LatencyOracle => "latency_oracle",
        }
    }
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SampleMethod {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SamplerError::UnknownMethod(s.to_string()))
    }
}

/// One sampling call; `encoding` / `reference` are needed only by the
/// methods that use them.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub method: SampleMethod,
    pub n: usize,
    pub seed: u64,
    pub encoding: Option<&'a EncodingTable>,
    pub reference: Option<&'a LatencyTable>,
}

pub fn sample(pool: &[Architecture], space: &SearchSpace, req: &SampleRequest<'_>) -> Result<Vec<String>> {
    let ids: Vec<String> = pool.iter().map(|a| a.arch_id().to_string()).collect();
    let missing_enc = || SamplerError::MissingEncoding("<no encoding table given>".into());
    match req.method {
        SampleMethod::Random => sample_random(&ids, req.n, req.seed),
        SampleMethod::Params => sample_params(pool, req.n, space, req.seed),
        SampleMethod::Cosine => sample_cosine(&ids, req.encoding.ok_or_else(missing_enc)?, req.n, req.seed),
        SampleMethod::Kmeans => sample_kmeans(&ids, req.encoding.ok_or_else(missing_enc)?, req.n, req.seed),
        SampleMethod::LatencyOracle => {
            let r = req
                .reference
                .ok_or_else(|| SamplerError::MissingReference("<no reference table given>".into()))?;
            sample_latency_oracle(&ids, r, req.n, req.seed)
        }
    }
}

/// Sorted, duplicate-checked ids plus a seeded tie-priority order.
struct Canon {
    ids: Vec<String>,
    /// `prio[i]`: lower wins ties.
    prio: Vec<usize>,
}

fn canon(pool: &[String], n: usize, seed: u64, label: &str) -> Result<Canon> {
    if n == 0 {
        return Err(SamplerError::ZeroCount);
    }
    let mut ids = pool.to_vec();
    ids.sort();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(SamplerError::DuplicateId(w[0].clone()));
        }
    }
    if n > ids.len() {
        return Err(SamplerError::PoolTooSmall { have: ids.len(), want: n });
    }
    let mut perm: Vec<usize> = (0..ids.len()).collect();
    perm.shuffle(&mut seed::sub_rng(seed, &format!("sampler/{label}/ties")));
    let mut prio = vec![0; ids.len()];
    for (rank, &i) in perm.iter().enumerate() {
        prio[i] = rank;
    }
    Ok(Canon { ids, prio })
}

fn vectors(c: &Canon, enc: &EncodingTable) -> Result<Vec<Vec<f64>>> {
    c.ids
        .iter()
        .map(|id| enc.get(id).map(<[f64]>::to_vec).ok_or_else(|| SamplerError::MissingEncoding(id.clone())))
        .collect()
}

pub fn sample_random(pool: &[String], n: usize, seed: u64) -> Result<Vec<String>> {
    let c = canon(pool, n, seed, "random")?;
    let mut idx: Vec<usize> = (0..c.ids.len()).collect();
    idx.shuffle(&mut seed::sub_rng(seed, "sampler/random"));
    Ok(idx[..n].iter().map(|&i| c.ids[i].clone()).collect())
}

/// One uniform pick from each of n equal-count bins of the parameter proxy.
pub fn sample_params(pool: &[Architecture], n: usize, space: &SearchSpace, seed: u64) -> Result<Vec<String>> {
    let ids: Vec<String> = pool.iter().map(|a| a.arch_id().to_string()).collect();
    let c = canon(&ids, n, seed, "params")?;
    let by_id: std::collections::BTreeMap<&str, &Architecture> = pool.iter().map(|a| (a.arch_id(), a)).collect();
    let mut keyed = Vec::with_capacity(c.ids.len());
    for (i, id) in c.ids.iter().enumerate() {
        let p = graph_proxies(by_id[id.as_str()], space)?[PARAMS_FEATURE];
        keyed.push((p, i));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut rng = seed::sub_rng(seed, "sampler/params");
    let total = keyed.len();
    Ok((0..n)
        .map(|k| {
            let (lo, hi) = (k * total / n, (k + 1) * total / n);
            let pick = rng.random_range(lo..hi);
            c.ids[keyed[pick].1].clone()
        })
        .collect())
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const SIM_TIE: f64 = 1e-12;

/// Greedy max-min cosine selection over canonical vectors.
fn farthest_point(c: &Canon, vecs: &[Vec<f64>], n: usize, seed: u64, label: &str) -> Vec<String> {
    let norms: Vec<f64> = vecs.iter().map(|v| norm(v)).collect();
    let m = vecs.len();
    let first = seed::sub_rng(seed, &format!("sampler/{label}/start")).random_range(0..m);
    let mut chosen = vec![first];
    let mut taken = vec![false; m];
    taken[first] = true;
    let mut max_sim: Vec<f64> = (0..m).map(|i| cosine(&vecs[i], norms[i], &vecs[first], norms[first])).collect();
    while chosen.len() < n {
        let best = (0..m).filter(|&i| !taken[i]).map(|i| max_sim[i]).fold(f64::INFINITY, f64::min);
        // near-equal similarities count as ties so rescaled inputs pick the same point
        let next = (0..m)
            .filter(|&i| !taken[i] && max_sim[i] <= best + SIM_TIE)
            .min_by_key(|&i| c.prio[i])
            .expect("pool larger than selection");
        taken[next] = true;
        chosen.push(next);
        for i in 0..m {
            let s = cosine(&vecs[i], norms[i], &vecs[next], norms[next]);
            if s > max_sim[i] {
                max_sim[i] = s;
            }
        }
    }
    chosen.into_iter().map(|i| c.ids[i].clone()).collect()
}

/// Farthest-point selection under cosine similarity, starting from a seeded
/// random point. Zero vectors have similarity 0 to everything.
pub fn sample_cosine(pool: &[String], encoding: &EncodingTable, n: usize, seed: u64) -> Result<Vec<String>> {
    let c = canon(pool, n, seed, "cosine")?;
    let vecs = vectors(&c, encoding)?;
    Ok(farthest_point(&c, &vecs, n, seed, "cosine"))
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const KMEANS_RESTARTS: usize = 8;
const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_TOL: f64 = 1e-9;

/// Result of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sqdist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until every centroid moves
/// less than 1e-9 or 300 iterations pass. Empty clusters keep their centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Clustering {
    let m = points.len();
    let mut centroids = vec![points[rng.random_range(0..m)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sqdist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..m)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sqdist(p, &centroids[centroids.len() - 1]));
        }
    }
    let dim = points[0].len();
    let mut assignment = vec![0; m];
    let mut iterations = 0;
    for it in 0..KMEANS_MAX_ITERS {
        iterations = it + 1;
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, x) in sums[assignment[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sqdist(&new, &centroids[j]).sqrt());
            centroids[j] = new;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (a, d) = nearest(p, &centroids);
        assignment[i] = a;
        inertia += d;
    }
    Clustering { centroids, assignment, inertia, iterations }
}

/// k-means with k = n (best of several seeded restarts by inertia), then the
/// member nearest each centroid. Clusters left empty are filled with the
/// points farthest from every centroid.
pub fn sample_kmeans(pool: &[String], encoding: &EncodingTable, n: usize, seed: u64) -> Result<Vec<String>> {
    let c = canon(pool, n, seed, "kmeans")?;
    let vecs = vectors(&c, encoding)?;
    if n > 1 && vecs.iter().all(|v| v == &vecs[0]) {
        return Err(SamplerError::DegenerateEncoding(n));
    }
    let mut rng = seed::sub_rng(seed, "sampler/kmeans");
    let mut best: Option<Clustering> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = kmeans(&vecs, n, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let cl = best.expect("at least one restart");
    let better = |a: (f64, usize), b: (f64, usize)| a.0 < b.0 || (a.0 == b.0 && c.prio[a.1] < c.prio[b.1]);
    let mut taken = vec![false; vecs.len()];
    let mut out = Vec::with_capacity(n);
    let mut empty = 0;
    for (j, cen) in cl.centroids.iter().enumerate() {
        let mut pick: Option<(f64, usize)> = None;
        for i in (0..vecs.len()).filter(|&i| cl.assignment[i] == j) {
            let cand = (sqdist(&vecs[i], cen), i);
            if pick.is_none_or(|p| better(cand, p)) {
                pick = Some(cand);
            }
        }
        match pick {
            Some((_, i)) => {
                taken[i] = true;
                out.push(i);
            }
            None => empty += 1,
        }
    }
    let mut far: Vec<(f64, usize)> = (0..vecs.len())
        .filter(|&i| !taken[i])
        .map(|i| (nearest(&vecs[i], &cl.centroids).1, i))
        .collect();
    far.sort_by(|a, b| b.0.total_cmp(&a.0).then(c.prio[a.1].cmp(&c.prio[b.1])));
    out.extend(far.iter().take(empty).map(|&(_, i)| i));
    Ok(out.into_iter().map(|i| c.ids[i].clone()).collect())
}

/// Farthest-point cosine selection on per-device standardized reference
/// latencies, each vector extended by a constant 1 so that a single
/// reference device still orders architectures by angle.
pub fn sample_latency_oracle(pool: &[String], reference: &LatencyTable, n: usize, seed: u64) -> Result<Vec<String>> {
    let c = canon(pool, n, seed, "latency_oracle")?;
    let devices: Vec<String> = reference
        .devices()
        .into_iter()
        .filter(|d| c.ids.iter().all(|a| reference.get(a, d).is_some()))
        .collect();
    if devices.is_empty() {
        let gap = c.ids.iter().find(|a| reference.devices().iter().all(|d| reference.get(a, d).is_none()));
        return Err(SamplerError::MissingReference(gap.unwrap_or(&c.ids[0]).clone()));
    }
    let mut vecs = vec![Vec::with_capacity(devices.len() + 1); c.ids.len()];
    for d in &devices {
        let col: Vec<f64> = c.ids.iter().map(|a| reference.get(a, d).expect("covered")).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        for (v, x) in vecs.iter_mut().zip(&col) {
            v.push(if sd > 0.0 { (x - mean) / sd } else { 0.0 });
        }
    }
    for v in &mut vecs {
        v.push(1.0);
    }
    Ok(farthest_point(&c, &vecs, n, seed, "latency_oracle"))
}

/// Checks the common output contract: length n, no duplicates, all in pool.
pub fn check_selection(pool: &[String], selection: &[String], n: usize) -> bool {
    let set: BTreeSet<&String> = selection.iter().collect();
    let pool: BTreeSet<&String> = pool.iter().collect();
    selection.len() == n && set.len() == n && set.iter().all(|s| pool.contains(s))
}
