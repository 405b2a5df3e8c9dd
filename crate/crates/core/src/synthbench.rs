//! Synthetic devices with a controllable latency model.
//!
//! A device assigns every operation a base cost and every ordered pair of
//! adjacent operations a fusion discount. An architecture's latency is the
//! layerwise cost sum minus the discounts earned on adjacent slot pairs,
//! times log-normal noise keyed by (device seed, arch_id):
//!
//! `lat = (sum_s c[op_s] - sum_(a->b) d[op_a][op_b] * min(c[op_a], c[op_b])) * exp(N(0, sigma^2))`
//!
//! Clones share their parent's costs up to a multiplicative jitter, which is
//! how cross-device correlation is planted.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archspace::{random_architecture_with, Architecture, SearchSpace, SlotGraph};
use crate::devicesets::LatencyTable;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub device_id: String,
    pub space_id: String,
    /// Per-op base cost in ms; all positive.
    pub base_costs: Vec<f64>,
    /// `discounts[a][b]` applies when op a feeds op b; each in [0, 1).
    pub discounts: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Parameters for drawing a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Std-dev of log base cost for fresh devices.
    pub cost_log_sigma: f64,
    /// Fresh discounts are drawn from U[0, max_discount).
    pub max_discount: f64,
    pub noise_sigma: f64,
    /// Parent to derive from; costs are inherited up to `cost_jitter`.
    pub clone_of: Option<SyntheticDevice>,
    /// Std-dev of the multiplicative log-jitter on inherited costs/discounts.
    pub cost_jitter: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            cost_log_sigma: 1.0,
            max_discount: 0.45,
            noise_sigma: 0.02,
            clone_of: None,
            cost_jitter: 0.0,
        }
    }
}

impl SyntheticDevice {
    pub fn check(&self) -> Result<(), String> {
        if self.base_costs.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(format!("{}: base costs must be positive", self.device_id));
        }
        if self.discounts.iter().flatten().any(|&d| !(0.0..1.0).contains(&d)) {
            return Err(format!("{}: discounts must lie in [0, 1)", self.device_id));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(format!("{}: noise sigma must be non-negative", self.device_id));
        }
        Ok(())
    }
}

/// Draws a device. With `clone_of` set, costs and discounts come from the
/// parent (jittered by `cost_jitter`) and only the noise stream is fresh.
pub fn gen_device(device_id: &str, space: &SearchSpace, seed: u64, family: &FamilyParams) -> SyntheticDevice {
    let mut rng = seed::sub_rng(seed, "device");
    let vocab = space.op_vocab_size();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (base_costs, discounts) = match &family.clone_of {
        Some(parent) => {
            let costs = parent
                .base_costs
                .iter()
                .map(|&c| c * (family.cost_jitter * std_normal.sample(&mut rng)).exp())
                .collect();
            let disc = parent
                .discounts
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&d| {
                            let j = (family.cost_jitter * std_normal.sample(&mut rng)).exp();
                            (d * j).min(family.max_discount.max(d)).min(0.999)
                        })
                        .collect()
                })
                .collect();
            (costs, disc)
        }
        None => {
            let costs = (0..vocab)
                .map(|_| (family.cost_log_sigma * std_normal.sample(&mut rng)).exp())
                .collect();
            let disc = (0..vocab)
                .map(|_| (0..vocab).map(|_| rng.random_range(0.0..family.max_discount.max(1e-12))).collect())
                .collect();
            (costs, disc)
        }
    };
    SyntheticDevice {
        device_id: device_id.to_string(),
        space_id: space.space_id.clone(),
        base_costs,
        discounts,
        noise_sigma: family.noise_sigma,
        seed,
    }
}

/// Noise-free layerwise sum minus adjacent-pair fusion discounts.
pub fn noiseless_latency(arch: &Architecture, device: &SyntheticDevice, graph: &SlotGraph) -> f64 {
    let ops = arch.ops();
    let c = |slot: usize| device.base_costs[ops[slot]];
    let base: f64 = (0..ops.len()).map(c).sum();
    let disc: f64 = graph
        .slot_edges()
        .iter()
        .map(|&(a, b)| device.discounts[ops[a]][ops[b]] * c(a).min(c(b)))
        .sum();
    base - disc
}

/// Multiplicative noise factor for (device, arch); pure in both.
pub fn noise_factor(arch_id: &str, device: &SyntheticDevice) -> f64 {
    if device.noise_sigma == 0.0 {
        return 1.0;
    }
    let mut rng = seed::rng(seed::derive(device.seed, arch_id));
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
    (device.noise_sigma * z).exp()
}

pub fn latency_of(arch: &Architecture, device: &SyntheticDevice, space: &SearchSpace) -> f64 {
    let graph = SlotGraph::for_space(space);
    noiseless_latency(arch, device, &graph) * noise_factor(arch.arch_id(), device)
}

/// `n_archs` distinct random architectures (sorted by arch_id) measured on every device.
pub fn gen_dataset(
    space: &SearchSpace,
    devices: &[SyntheticDevice],
    n_archs: usize,
    seed: u64,
) -> (Vec<Architecture>, LatencyTable) {
    let archs = distinct_archs(space, n_archs, seed);
    let graph = SlotGraph::for_space(space);
    let mut table = LatencyTable::new();
    for d in devices {
        for a in &archs {
            let lat = noiseless_latency(a, d, &graph) * noise_factor(a.arch_id(), d);
            table
                .insert(a.arch_id(), d.device_id.clone(), lat)
                .expect("synthetic latencies are positive and unique");
        }
    }
    (archs, table)
}

/// Distinct uniform architectures, sorted by arch_id.
pub fn distinct_archs(space: &SearchSpace, n: usize, seed: u64) -> Vec<Architecture> {
    let mut rng = seed::sub_rng(seed, "archs");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let cap = (space.op_vocab_size() as f64).powi(space.slot_count as i32);
    let n = if cap < n as f64 { cap as usize } else { n };
    while out.len() < n {
        let a = random_architecture_with(space, &mut rng);
        if seen.insert(a.arch_id().to_string()) {
            out.push(a);
        }
    }
    out.sort_by(|a, b| a.arch_id().cmp(b.arch_id()));
    out
}

/// A device whose Spearman correlation with `parent` over `archs` is as
/// close as possible to `target_rho`. Candidates interpolate between the
/// parent and a fresh independent draw (geometrically for costs, linearly
/// for discounts); a few fresh draws and a grid of mixing weights are tried.
/// Returns the device and the achieved correlation.
pub fn plant_clone(
    device_id: &str,
    parent: &SyntheticDevice,
    space: &SearchSpace,
    archs: &[Architecture],
    target_rho: f64,
    noise_sigma: f64,
    seed: u64,
) -> (SyntheticDevice, f64) {
    let graph = SlotGraph::for_space(space);
    let reference: Vec<f64> = archs.iter().map(|a| latency_of(a, parent, space)).collect();
    let mut best: Option<(f64, SyntheticDevice, f64)> = None;
    for k in 0..8 {
        let fresh = gen_device(device_id, space, seed::derive(seed, &format!("fresh{k}")), &FamilyParams::default());
        for step in 0..=40 {
            let t = step as f64 / 40.0;
            let d = SyntheticDevice {
                device_id: device_id.to_string(),
                space_id: space.space_id.clone(),
                base_costs: parent
                    .base_costs
                    .iter()
                    .zip(&fresh.base_costs)
                    .map(|(p, f)| p.powf(1.0 - t) * f.powf(t))
                    .collect(),
                discounts: parent
                    .discounts
                    .iter()
                    .zip(&fresh.discounts)
                    .map(|(rp, rf)| rp.iter().zip(rf).map(|(p, f)| (1.0 - t) * p + t * f).collect())
                    .collect(),
                noise_sigma,
                seed,
            };
            let lat: Vec<f64> = archs
                .iter()
                .map(|a| noiseless_latency(a, &d, &graph) * noise_factor(a.arch_id(), &d))
                .collect();
            let rho = crate::devicesets::spearman(&reference, &lat).unwrap_or(0.0);
            let gap = (rho - target_rho).abs();
            if best.as_ref().is_none_or(|b| gap < b.0) {
                best = Some((gap, d, rho));
            }
        }
    }
    let (_, d, rho) = best.expect("non-empty grid");
    (d, rho)
}

/// Device `i` is an independent draw when `plan[i]` is `None`, otherwise
/// `Some((parent, rho))` plants correlation `rho` with the earlier device
/// `parent` via [`plant_clone`]. Returns devices and achieved correlations.
pub fn gen_planted_family(
    space: &SearchSpace,
    archs: &[Architecture],
    plan: &[Option<(usize, f64)>],
    noise_sigma: f64,
    seed: u64,
) -> (Vec<SyntheticDevice>, Vec<Option<f64>>) {
    let mut devs: Vec<SyntheticDevice> = Vec::with_capacity(plan.len());
    let mut achieved = Vec::with_capacity(plan.len());
    for (i, entry) in plan.iter().enumerate() {
        let name = device_name(i);
        let dseed = seed::derive(seed, &name);
        match *entry {
            None => {
                let fam = FamilyParams { noise_sigma, ..FamilyParams::default() };
                devs.push(gen_device(&name, space, dseed, &fam));
                achieved.push(None);
            }
            Some((parent, rho)) => {
                assert!(parent < i, "parent must precede device {i}");
                let (d, r) = plant_clone(&name, &devs[parent], space, archs, rho, noise_sigma, dseed);
                devs.push(d);
                achieved.push(Some(r));
            }
        }
    }
    (devs, achieved)
}

/// Device ids `dev00`, `dev01`, ...
pub fn device_name(i: usize) -> String {
    format!("dev{i:02}")
}

/// A family of `n` devices: the first `roots` are independent draws, each
/// later device clones a root (round robin) with a jitter spread evenly over
/// `jitter_range`.
pub fn gen_family(
    space: &SearchSpace,
    n: usize,
    roots: usize,
    jitter_range: (f64, f64),
    noise_sigma: f64,
    seed: u64,
) -> Vec<SyntheticDevice> {
    let roots = roots.clamp(1, n.max(1));
    let mut out: Vec<SyntheticDevice> = Vec::with_capacity(n);
    for i in 0..n {
        let dseed = seed::derive(seed, &device_name(i));
        let family = if i < roots {
            FamilyParams {
                noise_sigma,
                ..FamilyParams::default()
            }
        } else {
            let k = i - roots;
            let clones = n - roots;
            let t = if clones > 1 { k as f64 / (clones - 1) as f64 } else { 0.0 };
            FamilyParams {
                noise_sigma,
                clone_of: Some(out[k % roots].clone()),
                cost_jitter: jitter_range.0 + t * (jitter_range.1 - jitter_range.0),
                ..FamilyParams::default()
            }
        };
        out.push(gen_device(&device_name(i), space, dseed, &family));
    }
    out
}
