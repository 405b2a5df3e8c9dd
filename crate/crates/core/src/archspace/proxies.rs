//! Graph-derived proxy features.
//!
//! Thirteen deterministic per-architecture features standing in for
//! zero-cost proxies, computed from the slot graph and a per-op cost table.
//! Order is fixed:
//!
//! | idx | feature |
//! |-----|---------|
//! | 0 | count of zero ops |
//! | 1 | count of skip ops |
//! | 2 | count of conv ops |
//! | 3 | count of pooling ops |
//! | 4 | parameter estimate (sum of per-op params) |
//! | 5 | FLOP estimate (sum of per-op FLOPs) |
//! | 6 | live slots: non-zero slots on some input-output path of non-zero slots |
//! | 7 | longest live path, in slots |
//! | 8 | most conv ops on any live path |
//! | 9 | distinct ops used |
//! | 10 | op-distribution entropy (nats) |
//! | 11 | 1 if the output is reachable through non-zero ops, else 0 |
//! | 12 | largest kernel among used conv ops |

use super::arch::{Architecture, SlotGraph};
use super::space::{OpCategory, SearchSpace};
use super::ArchError;

pub const PROXY_DIM: usize = 13;
/// Index of the parameter-estimate feature.
pub const PARAMS_FEATURE: usize = 4;

pub const PROXY_NAMES: [&str; PROXY_DIM] = [
    "n_zero",
    "n_skip",
    "n_conv",
    "n_pool",
    "params",
    "flops",
    "live_slots",
    "longest_path",
    "path_convs",
    "distinct_ops",
    "op_entropy",
    "connected",
    "max_kernel",
];

pub fn graph_proxies(arch: &Architecture, space: &SearchSpace) -> Result<Vec<f64>, ArchError> {
    arch.validate(space)?;
    let graph = SlotGraph::for_space(space);
    let ops = arch.ops();
    let info = |slot: usize| &space.ops[ops[slot]];

    let mut f = vec![0.0; PROXY_DIM];
    for slot in 0..ops.len() {
        let op = info(slot);
        match op.category {
            OpCategory::Zero => f[0] += 1.0,
            OpCategory::Skip => f[1] += 1.0,
            OpCategory::Conv => f[2] += 1.0,
            OpCategory::Pool => f[3] += 1.0,
        }
        f[4] += op.params;
        f[5] += op.flops;
        if op.category == OpCategory::Conv {
            f[12] = f[12].max(f64::from(op.kernel));
        }
    }

    // Live-path analysis on the slot graph; terminals are always alive.
    let n = graph.node_count();
    let alive: Vec<bool> = graph
        .slot_of
        .iter()
        .map(|s| s.is_none_or(|slot| info(slot).category != OpCategory::Zero))
        .collect();
    let is_conv = |node: usize| {
        graph.slot_of[node].is_some_and(|slot| info(slot).category == OpCategory::Conv)
    };
    let weight = |node: usize| usize::from(graph.slot_of[node].is_some());

    // Forward: longest path / most convs from the source; None = unreachable.
    let mut fwd_len: Vec<Option<usize>> = vec![None; n];
    let mut fwd_conv: Vec<Option<usize>> = vec![None; n];
    let mut bwd_ok = vec![false; n];
    if alive[0] {
        fwd_len[0] = Some(weight(0));
        fwd_conv[0] = Some(usize::from(is_conv(0)));
    }
    for &(a, b) in &graph.edges {
        if !alive[b] {
            continue;
        }
        if let (Some(la), Some(ca)) = (fwd_len[a], fwd_conv[a]) {
            let lb = la + weight(b);
            let cb = ca + usize::from(is_conv(b));
            fwd_len[b] = Some(fwd_len[b].map_or(lb, |x| x.max(lb)));
            fwd_conv[b] = Some(fwd_conv[b].map_or(cb, |x| x.max(cb)));
        }
    }
    let sink = graph.sink();
    bwd_ok[sink] = alive[sink];
    for &(a, b) in graph.edges.iter().rev() {
        if alive[a] && bwd_ok[b] {
            bwd_ok[a] = true;
        }
    }
    let connected = fwd_len[sink].is_some();
    if connected {
        f[6] = (0..n)
            .filter(|&v| graph.slot_of[v].is_some() && fwd_len[v].is_some() && bwd_ok[v])
            .count() as f64;
        f[7] = fwd_len[sink].unwrap_or(0) as f64;
        f[8] = fwd_conv[sink].unwrap_or(0) as f64;
        f[11] = 1.0;
    }

    let mut counts = vec![0usize; space.op_vocab_size()];
    for &o in ops {
        counts[o] += 1;
    }
    let total = ops.len() as f64;
    f[9] = counts.iter().filter(|&&c| c > 0).count() as f64;
    f[10] = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(ops: [usize; 6]) -> Vec<f64> {
        let s = SearchSpace::nb201();
        graph_proxies(&Architecture::from_ops(&s, ops.to_vec()).unwrap(), &s).unwrap()
    }

    #[test]
    fn all_skip_has_no_convs() {
        let f = nb([1; 6]);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[8], 0.0);
        assert_eq!(f[12], 0.0);
        assert_eq!(f[1], 6.0);
        // Input->(0,1)->(1,2)->(2,3)->output is the longest path.
        assert_eq!(f[7], 3.0);
        assert_eq!(f[6], 6.0);
    }

    #[test]
    fn counts_match_hand_enumeration() {
        // slots: (0,1)=conv3 (0,2)=none (1,2)=skip (0,3)=pool (1,3)=conv1 (2,3)=conv3
        let f = nb([3, 0, 1, 4, 2, 3]);
        assert_eq!(&f[0..4], &[1.0, 1.0, 3.0, 1.0]);
        assert_eq!(f[4], 256.0 + 2.0 * 2304.0);
        // Live paths: 0->3 via pool; 0->1->3 via conv3,conv1; 0->1->2->3 via conv3,skip,conv3.
        assert_eq!(f[7], 3.0);
        assert_eq!(f[8], 2.0);
        // (0,2) is zero, so 5 live slots.
        assert_eq!(f[6], 5.0);
        assert_eq!(f[9], 5.0);
        assert_eq!(f[11], 1.0);
        assert_eq!(f[12], 3.0);
        let expected_entropy = -(4.0 * (1.0 / 6.0) * (1.0f64 / 6.0).ln() + (2.0 / 6.0) * (2.0f64 / 6.0).ln());
        assert!((f[10] - expected_entropy).abs() < 1e-12);
    }

    #[test]
    fn disconnected_cell() {
        // Every edge into node 3 is zero.
        let f = nb([3, 3, 3, 0, 0, 0]);
        assert_eq!(f[11], 0.0);
        assert_eq!(f[7], 0.0);
        assert_eq!(f[6], 0.0);
    }

    #[test]
    fn independent_of_construction_path() {
        let s = SearchSpace::nb201();
        let a = Architecture::from_ops(&s, vec![2, 3, 4, 1, 0, 2]).unwrap();
        let b = Architecture::new("nb201", s.fixed_adjacency(), vec![2, 3, 4, 1, 0, 2]);
        assert_eq!(graph_proxies(&a, &s).unwrap(), graph_proxies(&b, &s).unwrap());
    }

    #[test]
    fn fbnet_chain() {
        let s = SearchSpace::fbnet();
        let mut ops = vec![8; 22];
        ops[3] = 7;
        let f = graph_proxies(&Architecture::from_ops(&s, ops).unwrap(), &s).unwrap();
        assert_eq!(f[1], 21.0);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[7], 22.0);
        assert_eq!(f[12], 5.0);
    }
}
