use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::space::{SearchSpace, SpaceKind};
use super::ArchError;

/// A DAG architecture: adjacency matrix plus one operation index per slot.
///
/// Immutable after construction; `arch_id` is derived from the content and
/// doubles as the join key across latency and encoding tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Architecture {
    space_id: String,
    adjacency: Vec<Vec<u8>>,
    ops: Vec<usize>,
    arch_id: String,
}

/// One line of an architecture JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchRecord {
    space: String,
    adj: Vec<Vec<u8>>,
    ops: Vec<usize>,
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch(String),
    CycleDetected { from: usize, to: usize },
    MultipleSources(Vec<usize>),
    MultipleSinks(Vec<usize>),
    UnreachableSink,
    TopologyMismatch,
    BadOpIndex { slot: usize, op: usize, vocab: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            Violation::CycleDetected { from, to } => {
                write!(f, "cycle detected: edge {from}->{to} is not strictly upper-triangular")
            }
            Violation::MultipleSources(v) => write!(f, "expected one source node, found {v:?}"),
            Violation::MultipleSinks(v) => write!(f, "expected one sink node, found {v:?}"),
            Violation::UnreachableSink => write!(f, "sink is not reachable from source"),
            Violation::TopologyMismatch => {
                write!(f, "adjacency differs from the space's fixed topology")
            }
            Violation::BadOpIndex { slot, op, vocab } => {
                write!(f, "slot {slot}: op index {op} outside vocabulary of {vocab}")
            }
        }
    }
}

/// Canonical content hash: SHA-256 over `space_id`, the row-major adjacency
/// bits and the comma-joined ops, truncated to 16 hex characters.
pub fn content_id(space_id: &str, adjacency: &[Vec<u8>], ops: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update(space_id.as_bytes());
    h.update(b"|");
    for row in adjacency {
        for &v in row {
            h.update([b'0' + v.min(1)]);
        }
        h.update(b";");
    }
    h.update(b"|");
    let ops_str = ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",");
    h.update(ops_str.as_bytes());
    hex::encode(&h.finalize()[..8])
}

impl Architecture {
    /// Builds an architecture without validating it against a space.
    pub fn new(space_id: impl Into<String>, adjacency: Vec<Vec<u8>>, ops: Vec<usize>) -> Self {
        let space_id = space_id.into();
        let arch_id = content_id(&space_id, &adjacency, &ops);
        Self {
            space_id,
            adjacency,
            ops,
            arch_id,
        }
    }

    /// Builds an architecture on the space's fixed topology and validates it.
    pub fn from_ops(space: &SearchSpace, ops: Vec<usize>) -> Result<Self, ArchError> {
        let arch = Self::new(space.space_id.clone(), space.fixed_adjacency(), ops);
        arch.validate(space)?;
        Ok(arch)
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn ops(&self) -> &[usize] {
        &self.ops
    }

    pub fn arch_id(&self) -> &str {
        &self.arch_id
    }

    /// Collects every violated invariant; `Ok` iff none.
    pub fn violations(&self, space: &SearchSpace) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = space.node_count;
        if self.space_id != space.space_id {
            out.push(Violation::DimensionMismatch(format!(
                "architecture belongs to space {}, not {}",
                self.space_id, space.space_id
            )));
            return out;
        }
        if self.adjacency.len() != n || self.adjacency.iter().any(|r| r.len() != n) {
            out.push(Violation::DimensionMismatch(format!("adjacency must be {n}x{n}")));
            return out;
        }
        if self.ops.len() != space.slot_count {
            out.push(Violation::DimensionMismatch(format!(
                "expected {} op slots, got {}",
                space.slot_count,
                self.ops.len()
            )));
        }

        let mut acyclic = true;
        for (i, row) in self.adjacency.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 && j <= i {
                    out.push(Violation::CycleDetected { from: i, to: j });
                    acyclic = false;
                }
            }
        }
        if acyclic {
            let has_in = |j: usize| (0..n).any(|i| self.adjacency[i][j] != 0);
            let has_out = |i: usize| self.adjacency[i].iter().any(|&v| v != 0);
            let sources: Vec<usize> = (0..n).filter(|&j| !has_in(j)).collect();
            let sinks: Vec<usize> = (0..n).filter(|&i| !has_out(i)).collect();
            if sources.len() != 1 {
                out.push(Violation::MultipleSources(sources.clone()));
            }
            if sinks.len() != 1 {
                out.push(Violation::MultipleSinks(sinks.clone()));
            }
            // Reachability from the first node to the last (topological order).
            let mut seen = vec![false; n];
            seen[0] = true;
            for i in 0..n {
                if seen[i] {
                    for (j, &e) in self.adjacency[i].iter().enumerate() {
                        if e != 0 {
                            seen[j] = true;
                        }
                    }
                }
            }
            if !seen[n - 1] {
                out.push(Violation::UnreachableSink);
            }
            if out.is_empty() && self.adjacency != space.fixed_adjacency() {
                out.push(Violation::TopologyMismatch);
            }
        }

        let vocab = space.op_vocab_size();
        for (slot, &op) in self.ops.iter().enumerate() {
            if op >= vocab {
                out.push(Violation::BadOpIndex { slot, op, vocab });
            }
        }
        out
    }

    pub fn validate(&self, space: &SearchSpace) -> Result<(), ArchError> {
        let v = self.violations(space);
        if v.is_empty() {
            Ok(())
        } else {
            Err(ArchError::Invalid(v))
        }
    }
}

/// Uniform draw over the space: every slot gets an independent uniform op.
pub fn random_architecture(space: &SearchSpace, seed: u64) -> Architecture {
    let mut rng = crate::seed::rng(seed);
    random_architecture_with(space, &mut rng)
}

pub fn random_architecture_with<R: Rng>(space: &SearchSpace, rng: &mut R) -> Architecture {
    let vocab = space.op_vocab_size();
    let ops = (0..space.slot_count).map(|_| rng.random_range(0..vocab)).collect();
    Architecture::new(space.space_id.clone(), space.fixed_adjacency(), ops)
}

/// One-hot per slot, concatenated in slot order.
pub fn flatten_encoding(arch: &Architecture, space: &SearchSpace) -> Result<Vec<f64>, ArchError> {
    arch.validate(space)?;
    let vocab = space.op_vocab_size();
    let mut v = vec![0.0; space.slot_count * vocab];
    for (slot, &op) in arch.ops().iter().enumerate() {
        v[slot * vocab + op] = 1.0;
    }
    Ok(v)
}

/// The slot-level graph the predictor and the synthetic devices operate on.
///
/// Micro-cell spaces are lowered to their line graph (one node per cell edge)
/// framed by an input and an output terminal; macro-chain spaces map one node
/// to each position. Node order is topological, so the source is node 0 and
/// the sink is the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGraph {
    /// `slot_of[node]` is the op slot a node carries, `None` for terminals.
    pub slot_of: Vec<Option<usize>>,
    /// Directed edges (from, to) with from < to.
    pub edges: Vec<(usize, usize)>,
}

impl SlotGraph {
    pub fn for_space(space: &SearchSpace) -> Self {
        match space.kind {
            SpaceKind::MacroChain => {
                let n = space.slot_count;
                Self {
                    slot_of: (0..n).map(Some).collect(),
                    edges: (1..n).map(|i| (i - 1, i)).collect(),
                }
            }
            SpaceKind::MicroCell => {
                let cell = space.cell_edges();
                let last = space.node_count - 1;
                let n = cell.len() + 2;
                let mut slot_of = vec![None];
                slot_of.extend((0..cell.len()).map(Some));
                slot_of.push(None);
                let mut edges = Vec::new();
                for (s, &(from, _)) in cell.iter().enumerate() {
                    if from == 0 {
                        edges.push((0, s + 1));
                    }
                }
                for (a, &(_, mid)) in cell.iter().enumerate() {
                    for (b, &(from, _)) in cell.iter().enumerate() {
                        if from == mid {
                            edges.push((a + 1, b + 1));
                        }
                    }
                }
                for (s, &(_, to)) in cell.iter().enumerate() {
                    if to == last {
                        edges.push((s + 1, n - 1));
                    }
                }
                edges.sort_unstable();
                Self { slot_of, edges }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.slot_of.len()
    }

    pub fn sink(&self) -> usize {
        self.node_count() - 1
    }

    /// Matrix with `m[i][j] = 1` iff there is an edge j -> i.
    pub fn in_neighbor_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.node_count();
        let mut m = vec![vec![0.0; n]; n];
        for &(from, to) in &self.edges {
            m[to][from] = 1.0;
        }
        m
    }

    /// Edges between two slot-carrying nodes, as (slot_a, slot_b).
    pub fn slot_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| Some((self.slot_of[a]?, self.slot_of[b]?)))
            .collect()
    }
}

/// Reads an architecture JSONL file, validating every line against `spaces`.
pub fn read_arch_jsonl(path: &Path, spaces: &[SearchSpace]) -> Result<Vec<Architecture>, ArchError> {
    let file = std::fs::File::open(path).map_err(|e| ArchError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ArchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArchRecord = serde_json::from_str(&line).map_err(|e| ArchError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let space = spaces
            .iter()
            .find(|s| s.space_id == rec.space)
            .ok_or_else(|| ArchError::UnknownSpace(rec.space.clone()))?;
        let arch = Architecture::new(rec.space, rec.adj, rec.ops);
        arch.validate(space)?;
        out.push(arch);
    }
    Ok(out)
}

/// Writes architectures as JSONL, one compact record per line.
pub fn write_arch_jsonl<W: Write>(mut w: W, archs: &[Architecture]) -> std::io::Result<()> {
    for a in archs {
        let rec = ArchRecord {
            space: a.space_id.clone(),
            adj: a.adjacency.clone(),
            ops: a.ops.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
