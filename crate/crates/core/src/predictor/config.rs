use serde::{Deserialize, Serialize};

use crate::archspace::SpaceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Dgf,
    Gat,
    Ensemble,
}

impl GnnKind {
    pub fn uses_dgf(self) -> bool {
        matches!(self, GnnKind::Dgf | GnnKind::Ensemble)
    }

    pub fn uses_gat(self) -> bool {
        matches!(self, GnnKind::Gat | GnnKind::Ensemble)
    }
}

/// How the main GNN's node embeddings are reduced to one graph embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// The sink (output) node.
    Sink,
    /// Mean over all nodes; useful on long chains where the sink only sees
    /// the last few positions.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub op_embed_dim: usize,
    pub node_embed_dim: usize,
    pub hw_embed_dim: usize,
    /// Width of the refined operation features fed to the main GNN gates.
    pub hidden_dim: usize,
    pub ophw_gcn_dims: Vec<usize>,
    pub ophw_mlp_dims: Vec<usize>,
    pub gcn_dims: Vec<usize>,
    pub head_mlp_dims: Vec<usize>,
    pub gnn_kind: GnnKind,
    pub readout: Readout,
    pub supplementary_dim: usize,
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            op_embed_dim: 48,
            node_embed_dim: 48,
            hw_embed_dim: 48,
            hidden_dim: 96,
            ophw_gcn_dims: vec![128, 128],
            ophw_mlp_dims: vec![128],
            gcn_dims: vec![128, 128, 128],
            head_mlp_dims: vec![200, 200, 200],
            gnn_kind: GnnKind::Ensemble,
            readout: Readout::Sink,
            supplementary_dim: 0,
            leaky_slope: 0.2,
            layer_norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl PredictorConfig {
    /// Defaults with the readout suited to the space's topology.
    pub fn for_space(kind: SpaceKind) -> Self {
        Self {
            readout: match kind {
                SpaceKind::MicroCell => Readout::Sink,
                SpaceKind::MacroChain => Readout::Mean,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let scalar = [
            ("op_embed_dim", self.op_embed_dim),
            ("node_embed_dim", self.node_embed_dim),
            ("hw_embed_dim", self.hw_embed_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in scalar {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        let lists = [
            ("ophw_gcn_dims", &self.ophw_gcn_dims),
            ("gcn_dims", &self.gcn_dims),
        ];
        for (name, v) in lists {
            if v.is_empty() {
                return Err(format!("{name} must have at least one layer"));
            }
        }
        for (name, v) in [
            ("ophw_gcn_dims", &self.ophw_gcn_dims),
            ("ophw_mlp_dims", &self.ophw_mlp_dims),
            ("gcn_dims", &self.gcn_dims),
            ("head_mlp_dims", &self.head_mlp_dims),
        ] {
            if v.contains(&0) {
                return Err(format!("{name} entries must be positive"));
            }
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err("leaky_slope must lie in [0, 1)".into());
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps > 0.0) {
            return Err("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn joint_dim(&self) -> usize {
        self.op_embed_dim + self.hw_embed_dim
    }
}
