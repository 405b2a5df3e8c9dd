use serde::{Deserialize, Serialize};

/// Where a space places its operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    /// Operations live on the edges of a small cell DAG (NASBench-201 style).
    MicroCell,
    /// Operations live on the positions of a fixed sequential chain (FBNet style).
    MacroChain,
}

/// Coarse operation category, used by the graph-derived proxy features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpCategory {
    Zero,
    Skip,
    Conv,
    Pool,
}

/// Static description of a single candidate operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpInfo {
    pub name: String,
    pub category: OpCategory,
    /// Relative parameter count.
    pub params: f64,
    /// Relative FLOP count.
    pub flops: f64,
    /// Spatial kernel size (0 when not applicable).
    pub kernel: u32,
}

impl OpInfo {
    fn new(name: &str, category: OpCategory, params: f64, flops: f64, kernel: u32) -> Self {
        Self {
            name: name.to_string(),
            category,
            params,
            flops,
            kernel,
        }
    }
}

/// An architecture search space: topology kind, node/slot counts and the
/// ordered operation vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub space_id: String,
    pub kind: SpaceKind,
    pub node_count: usize,
    pub slot_count: usize,
    pub ops: Vec<OpInfo>,
}

/// Identifier of the NASBench-201 micro-cell space.
pub const NB201: &str = "nb201";
/// Identifier of the FBNet macro-chain space.
pub const FBNET: &str = "fbnet";

impl SearchSpace {
    /// NASBench-201: 4 nodes, 6 edges, 5 operation types per edge.
    ///
    /// Slots follow the benchmark's arch-string order: edges grouped by target
    /// node, then by source node, i.e. (0,1) (0,2) (1,2) (0,3) (1,3) (2,3).
    pub fn nb201() -> Self {
        // 16-channel cell on a 32x32 feature map.
        let c = 16.0;
        let hw = 32.0 * 32.0;
        Self {
            space_id: NB201.to_string(),
            kind: SpaceKind::MicroCell,
            node_count: 4,
            slot_count: 6,
            ops: vec![
                OpInfo::new("none", OpCategory::Zero, 0.0, 0.0, 0),
                OpInfo::new("skip_connect", OpCategory::Skip, 0.0, 0.0, 0),
                OpInfo::new("nor_conv_1x1", OpCategory::Conv, c * c, c * c * hw, 1),
                OpInfo::new("nor_conv_3x3", OpCategory::Conv, 9.0 * c * c, 9.0 * c * c * hw, 3),
                OpInfo::new("avg_pool_3x3", OpCategory::Pool, 0.0, 9.0 * c * hw, 3),
            ],
        }
    }

    /// FBNet: a 22-position chain with 9 candidate blocks per position.
    pub fn fbnet() -> Self {
        // Inverted-residual block with C channels, expansion e and g groups:
        // two pointwise convs (2 C^2 e / g) plus a depthwise k x k conv (k^2 C e).
        let c = 32.0;
        let hw = 14.0 * 14.0;
        let mb = |name: &str, k: u32, e: f64, g: f64| {
            let kk = f64::from(k * k);
            let params = 2.0 * c * c * e / g + kk * c * e;
            OpInfo::new(name, OpCategory::Conv, params, params * hw, k)
        };
        Self {
            space_id: FBNET.to_string(),
            kind: SpaceKind::MacroChain,
            node_count: 22,
            slot_count: 22,
            ops: vec![
                mb("k3_e1", 3, 1.0, 1.0),
                mb("k3_e1_g2", 3, 1.0, 2.0),
                mb("k3_e3", 3, 3.0, 1.0),
                mb("k3_e6", 3, 6.0, 1.0),
                mb("k5_e1", 5, 1.0, 1.0),
                mb("k5_e1_g2", 5, 1.0, 2.0),
                mb("k5_e3", 5, 3.0, 1.0),
                mb("k5_e6", 5, 6.0, 1.0),
                OpInfo::new("skip", OpCategory::Skip, 0.0, 0.0, 0),
            ],
        }
    }

    /// Looks up one of the built-in spaces by id.
    pub fn by_id(id: &str) -> Option<Self> {
        match id {
            NB201 => Some(Self::nb201()),
            FBNET => Some(Self::fbnet()),
            _ => None,
        }
    }

    pub fn op_vocab_size(&self) -> usize {
        self.ops.len()
    }

    pub fn op_names(&self) -> Vec<&str> {
        self.ops.iter().map(|o| o.name.as_str()).collect()
    }

    /// The fixed adjacency every architecture of this space carries.
    pub fn fixed_adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.node_count;
        let mut adj = vec![vec![0u8; n]; n];
        match self.kind {
            SpaceKind::MicroCell => {
                for (i, row) in adj.iter_mut().enumerate() {
                    for cell in row.iter_mut().skip(i + 1) {
                        *cell = 1;
                    }
                }
            }
            SpaceKind::MacroChain => {
                for i in 0..n.saturating_sub(1) {
                    adj[i][i + 1] = 1;
                }
            }
        }
        adj
    }

    /// Cell edges in slot order (micro-cell only): grouped by target node, then source.
    pub fn cell_edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count;
        let mut edges = Vec::new();
        for to in 1..n {
            for from in 0..to {
                edges.push((from, to));
            }
        }
        edges
    }

    /// Checks the structural invariants of the built-in space kinds.
    pub fn check(&self) -> Result<(), String> {
        if self.ops.is_empty() || self.slot_count == 0 || self.node_count == 0 {
            return Err(format!("space {} has empty vocabulary or no slots", self.space_id));
        }
        match self.kind {
            SpaceKind::MicroCell => {
                let edges = self.node_count * (self.node_count - 1) / 2;
                if edges != self.slot_count {
                    return Err(format!(
                        "micro-cell space {} needs one slot per cell edge ({edges}), has {}",
                        self.space_id, self.slot_count
                    ));
                }
            }
            SpaceKind::MacroChain => {
                if self.node_count != self.slot_count {
                    return Err(format!(
                        "macro-chain space {} needs one node per slot",
                        self.space_id
                    ));
                }
            }
        }
        Ok(())
    }
}
