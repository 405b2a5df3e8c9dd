use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{PredictorConfig, Readout};
use super::layers::{dgf_on_tape, gat_on_tape, DgfVars, GatVars};
use super::PredictorError;
use crate::archspace::{Architecture, SearchSpace, SlotGraph};
use crate::autodiff::{AdamState, ParamId, ParamStore, Tape, Tensor, Var};
use crate::devicesets::{spearman, DeviceError, LatencyTable};
use crate::seed;

type Result<T> = std::result::Result<T, PredictorError>;

#[derive(Debug, Clone, Copy)]
enum Init {
    Glorot,
    Embedding,
    Zeros,
    Ones,
}

struct Slot {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

fn layout(config: &PredictorConfig, spaces: &[SearchSpace], n_devices: usize) -> Vec<Slot> {
    let mut out = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, init: Init| out.push(Slot { name, rows, cols, init });
    for s in spaces {
        // one extra row for terminal nodes that carry no operation
        push(format!("op_embed.{}", s.space_id), s.op_vocab_size() + 1, config.op_embed_dim, Init::Embedding);
        let nodes = SlotGraph::for_space(s).node_count();
        push(format!("node_embed.{}", s.space_id), nodes, config.node_embed_dim, Init::Embedding);
    }
    push("hw_embed".into(), n_devices, config.hw_embed_dim, Init::Embedding);

    let joint = config.joint_dim();
    let mut d_in = joint;
    for (l, &d) in config.ophw_gcn_dims.iter().enumerate() {
        push(format!("refine.gcn{l}.w_o"), joint, d, Init::Glorot);
        push(format!("refine.gcn{l}.w_f"), d_in, d, Init::Glorot);
        push(format!("refine.gcn{l}.b_f"), 1, d, Init::Zeros);
        d_in = d;
    }
    for (l, &d) in config.ophw_mlp_dims.iter().enumerate() {
        push(format!("refine.mlp{l}.w"), d_in, d, Init::Glorot);
        push(format!("refine.mlp{l}.b"), 1, d, Init::Zeros);
        d_in = d;
    }
    push("refine.out.w".into(), d_in, config.hidden_dim, Init::Glorot);
    push("refine.out.b".into(), 1, config.hidden_dim, Init::Zeros);

    if config.gnn_kind.uses_dgf() {
        let mut d_in = config.node_embed_dim;
        for (l, &d) in config.gcn_dims.iter().enumerate() {
            push(format!("dgf{l}.w_o"), config.hidden_dim, d, Init::Glorot);
            push(format!("dgf{l}.w_f"), d_in, d, Init::Glorot);
            push(format!("dgf{l}.b_f"), 1, d, Init::Zeros);
            d_in = d;
        }
    }
    if config.gnn_kind.uses_gat() {
        let mut d_in = config.node_embed_dim;
        for (l, &d) in config.gcn_dims.iter().enumerate() {
            push(format!("gat{l}.w_p"), d_in, d, Init::Glorot);
            push(format!("gat{l}.a"), 1, d, Init::Glorot);
            push(format!("gat{l}.w_o"), config.hidden_dim, d, Init::Glorot);
            push(format!("gat{l}.gamma"), 1, d, Init::Ones);
            push(format!("gat{l}.beta"), 1, d, Init::Zeros);
            d_in = d;
        }
    }
    let mut d_in = config.gcn_dims.last().copied().unwrap_or(0) + config.supplementary_dim;
    for (l, &d) in config.head_mlp_dims.iter().enumerate() {
        push(format!("head{l}.w"), d_in, d, Init::Glorot);
        push(format!("head{l}.b"), 1, d, Init::Zeros);
        d_in = d;
    }
    push("head.out.w".into(), d_in, 1, Init::Glorot);
    push("head.out.b".into(), 1, 1, Init::Zeros);
    out
}

fn init_tensor(slot: &Slot, seed: u64) -> Tensor {
    let mut rng = seed::sub_rng(seed, &slot.name);
    let (r, c) = (slot.rows, slot.cols);
    match slot.init {
        Init::Zeros => Tensor::zeros(r, c),
        Init::Ones => Tensor::filled(r, c, 1.0),
        Init::Glorot => {
            let lim = (6.0 / (r + c) as f64).sqrt();
            let data = (0..r * c).map(|_| rng.random_range(-lim..lim)).collect();
            Tensor::from_vec(r, c, data).expect("layout shape")
        }
        Init::Embedding => {
            let nd = Normal::new(0.0, 0.1).expect("valid normal");
            let data = (0..r * c).map(|_| nd.sample(&mut rng)).collect();
            Tensor::from_vec(r, c, data).expect("layout shape")
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DgfIds {
    w_o: ParamId,
    w_f: ParamId,
    b_f: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct GatIds {
    w_p: ParamId,
    a: ParamId,
    w_o: ParamId,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    op_embed: Vec<ParamId>,
    node_embed: Vec<ParamId>,
    hw: ParamId,
    refine_gcn: Vec<DgfIds>,
    refine_mlp: Vec<(ParamId, ParamId)>,
    refine_out: (ParamId, ParamId),
    dgf: Vec<DgfIds>,
    gat: Vec<GatIds>,
    head: Vec<(ParamId, ParamId)>,
    head_out: (ParamId, ParamId),
}

impl Ids {
    fn resolve(store: &ParamStore, config: &PredictorConfig, spaces: &[SearchSpace]) -> Self {
        let id = |n: String| store.id(&n).unwrap_or_else(|| panic!("missing parameter {n}"));
        let dgf = |prefix: &str, l: usize| DgfIds {
            w_o: id(format!("{prefix}{l}.w_o")),
            w_f: id(format!("{prefix}{l}.w_f")),
            b_f: id(format!("{prefix}{l}.b_f")),
        };
        let n_gcn = config.gcn_dims.len();
        Ids {
            op_embed: spaces.iter().map(|s| id(format!("op_embed.{}", s.space_id))).collect(),
            node_embed: spaces.iter().map(|s| id(format!("node_embed.{}", s.space_id))).collect(),
            hw: id("hw_embed".into()),
            refine_gcn: (0..config.ophw_gcn_dims.len()).map(|l| dgf("refine.gcn", l)).collect(),
            refine_mlp: (0..config.ophw_mlp_dims.len())
                .map(|l| (id(format!("refine.mlp{l}.w")), id(format!("refine.mlp{l}.b"))))
                .collect(),
            refine_out: (id("refine.out.w".into()), id("refine.out.b".into())),
            dgf: if config.gnn_kind.uses_dgf() { (0..n_gcn).map(|l| dgf("dgf", l)).collect() } else { Vec::new() },
            gat: if config.gnn_kind.uses_gat() {
                (0..n_gcn)
                    .map(|l| GatIds {
                        w_p: id(format!("gat{l}.w_p")),
                        a: id(format!("gat{l}.a")),
                        w_o: id(format!("gat{l}.w_o")),
                        gamma: id(format!("gat{l}.gamma")),
                        beta: id(format!("gat{l}.beta")),
                    })
                    .collect()
            } else {
                Vec::new()
            },
            head: (0..config.head_mlp_dims.len())
                .map(|l| (id(format!("head{l}.w")), id(format!("head{l}.b"))))
                .collect(),
            head_out: (id("head.out.w".into()), id("head.out.b".into())),
        }
    }
}

/// Lowered topology of one space.
#[derive(Debug, Clone)]
struct GraphPlan {
    graph: SlotGraph,
    adj: Tensor,
    mask: Vec<bool>,
}

impl GraphPlan {
    fn new(space: &SearchSpace) -> Self {
        let graph = SlotGraph::for_space(space);
        let m = graph.in_neighbor_matrix();
        let adj = Tensor::from_rows(&m).expect("square matrix");
        let mask = adj.data().iter().map(|&v| v != 0.0).collect();
        Self { graph, adj, mask }
    }

    fn n(&self) -> usize {
        self.graph.node_count()
    }
}

/// Affine map from predictor score to milliseconds for one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub slope: f64,
    pub intercept: f64,
}

impl Calibration {
    pub fn apply(&self, score: f64) -> f64 {
        self.slope * score + self.intercept
    }

    /// Least-squares fit of `ms ~ slope * score + intercept`. Falls back to
    /// a constant at the mean when the scores do not vary.
    pub fn fit(scores: &[f64], ms: &[f64]) -> Self {
        let n = scores.len().max(1) as f64;
        let mx = scores.iter().sum::<f64>() / n;
        let my = ms.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in scores.iter().zip(ms) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        Calibration {
            slope,
            intercept: my - slope * mx,
        }
    }
}

/// Inputs for one forward pass over architectures of a single space.
#[derive(Debug, Clone)]
pub struct Batch {
    space: usize,
    blocks: usize,
    op_idx: Vec<usize>,
    hw_idx: Vec<usize>,
    node_idx: Vec<usize>,
    supp: Option<Tensor>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks == 0
    }
}

/// Tape handles for the intermediate activations of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub refined: Var,
    pub dgf_out: Option<Var>,
    pub gat_out: Option<Var>,
    pub graph_embedding: Var,
    pub head_input: Var,
    pub scores: Var,
}

/// Materialized activations for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Refined operation features, one row per lowered node.
    pub refined: Tensor,
    pub dgf_readout: Option<Tensor>,
    pub gat_readout: Option<Tensor>,
    pub graph_embedding: Tensor,
    pub head_input: Tensor,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PredictorState {
    pub config: PredictorConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    /// Score-to-ms maps fitted after transfer, keyed by device id.
    pub calibration: BTreeMap<String, Calibration>,
    spaces: Vec<SearchSpace>,
    plans: Vec<GraphPlan>,
    devices: Vec<String>,
    ids: Ids,
}

pub fn init_predictor(
    config: &PredictorConfig,
    spaces: &[SearchSpace],
    device_ids: &[String],
    seed: u64,
) -> Result<PredictorState> {
    PredictorState::init(config, spaces, device_ids, seed)
}

impl PredictorState {
    pub fn init(config: &PredictorConfig, spaces: &[SearchSpace], device_ids: &[String], seed: u64) -> Result<Self> {
        config.validate().map_err(PredictorError::InvalidConfig)?;
        if spaces.is_empty() {
            return Err(PredictorError::InvalidConfig("at least one search space required".into()));
        }
        for (i, d) in device_ids.iter().enumerate() {
            if device_ids[..i].contains(d) {
                return Err(PredictorError::DuplicateDevice(d.clone()));
            }
        }
        let config = PredictorConfig { seed, ..config.clone() };
        let mut params = ParamStore::new();
        for slot in layout(&config, spaces, device_ids.len()) {
            let t = init_tensor(&slot, seed);
            params.add(slot.name, t);
        }
        Ok(Self::assemble(config, params, spaces.to_vec(), device_ids.to_vec(), BTreeMap::new()))
    }

    fn assemble(
        config: PredictorConfig,
        params: ParamStore,
        spaces: Vec<SearchSpace>,
        devices: Vec<String>,
        calibration: BTreeMap<String, Calibration>,
    ) -> Self {
        let ids = Ids::resolve(&params, &config, &spaces);
        let plans = spaces.iter().map(GraphPlan::new).collect();
        Self {
            adam: AdamState::new(&params),
            config,
            params,
            calibration,
            spaces,
            plans,
            devices,
            ids,
        }
    }

    pub fn spaces(&self) -> &[SearchSpace] {
        &self.spaces
    }

    pub fn devices(&self) -> &[String] {
        &self.devices
    }

    pub fn device_index(&self, device_id: &str) -> Result<usize> {
        self.devices
            .iter()
            .position(|d| d == device_id)
            .ok_or_else(|| PredictorError::UnknownDevice(device_id.to_string()))
    }

    fn space_index(&self, space_id: &str) -> Result<usize> {
        self.spaces
            .iter()
            .position(|s| s.space_id == space_id)
            .ok_or_else(|| PredictorError::UnknownSpace(space_id.to_string()))
    }

    pub fn hw_row(&self, device_id: &str) -> Result<&[f64]> {
        let i = self.device_index(device_id)?;
        Ok(self.params.get(self.ids.hw).row(i))
    }

    pub fn set_hw_row(&mut self, device_id: &str, row: &[f64]) -> Result<()> {
        let i = self.device_index(device_id)?;
        let t = self.params.get_mut(self.ids.hw);
        if row.len() != t.cols() {
            return Err(PredictorError::InvalidConfig(format!(
                "hw row of width {} for a {}-wide table",
                row.len(),
                t.cols()
            )));
        }
        t.row_mut(i).copy_from_slice(row);
        Ok(())
    }

    /// Appends a zero hw-embedding row for a new device and resets the
    /// optimizer state (its moment shapes change).
    pub fn register_device(&mut self, device_id: &str) -> Result<usize> {
        if self.devices.iter().any(|d| d == device_id) {
            return Err(PredictorError::DuplicateDevice(device_id.to_string()));
        }
        let old = self.params.get(self.ids.hw);
        let mut data = old.data().to_vec();
        data.extend(std::iter::repeat_n(0.0, old.cols()));
        let t = Tensor::from_vec(old.rows() + 1, old.cols(), data).expect("grown table");
        self.params.replace(self.ids.hw, t);
        self.devices.push(device_id.to_string());
        self.adam = AdamState::new(&self.params);
        Ok(self.devices.len() - 1)
    }

    /// Copies the hw row of the source device whose latencies correlate best
    /// (Spearman) with the target's on shared architectures; ties go to the
    /// lowest registry index. `table` must hold both the target's samples and
    /// the sources' measurements. Returns the chosen source.
    pub fn init_target_hw_embedding(&mut self, target: &str, table: &LatencyTable, sources: &[String]) -> Result<String> {
        self.device_index(target)?;
        let mut scored: Vec<(usize, f64, &String)> = Vec::new();
        let mut all: Vec<&str> = vec![target];
        all.extend(sources.iter().map(String::as_str));
        let shared = table.shared_archs(&all);
        if shared.len() < 2 {
            let (a, b) = (target.to_string(), sources.first().cloned().unwrap_or_default());
            return Err(DeviceError::InsufficientOverlap { a, b, shared: shared.len() }.into());
        }
        let col = |d: &str| -> Vec<f64> { shared.iter().map(|a| table.get(a, d).expect("shared arch")).collect() };
        let t = col(target);
        let mut last_err = None;
        for s in sources {
            let idx = self.device_index(s)?;
            match spearman(&t, &col(s)) {
                Ok(r) => scored.push((idx, r, s)),
                Err(e) => last_err = Some(e),
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let Some(&(_, _, best)) = scored.first() else {
            return Err(last_err.unwrap_or(DeviceError::TooShort(0)).into());
        };
        let best = best.clone();
        let row = self.hw_row(&best)?.to_vec();
        self.set_hw_row(target, &row)?;
        Ok(best)
    }

    /// Builds forward inputs. All architectures must share one space.
    pub fn batch(&self, archs: &[&Architecture], device_id: &str, supplementary: Option<&[&[f64]]>) -> Result<Batch> {
        let dev = self.device_index(device_id)?;
        let space_id = archs.first().map(|a| a.space_id()).unwrap_or(&self.spaces[0].space_id);
        let s = self.space_index(space_id)?;
        let space = &self.spaces[s];
        let plan = &self.plans[s];
        let n = plan.n();
        let vocab = space.op_vocab_size();
        let mut op_idx = Vec::with_capacity(archs.len() * n);
        for a in archs {
            if a.space_id() != space_id {
                return Err(PredictorError::MixedSpaces);
            }
            a.validate(space)?;
            for slot in &plan.graph.slot_of {
                op_idx.push(slot.map_or(vocab, |k| a.ops()[k]));
            }
        }
        let sd = self.config.supplementary_dim;
        let supp = match supplementary {
            Some(rows) => {
                if rows.len() != archs.len() {
                    return Err(PredictorError::BadSupplementaryDim { expected: archs.len(), found: rows.len() });
                }
                let mut data = Vec::with_capacity(archs.len() * sd);
                for r in rows {
                    if r.len() != sd {
                        return Err(PredictorError::BadSupplementaryDim { expected: sd, found: r.len() });
                    }
                    data.extend_from_slice(r);
                }
                Some(Tensor::from_vec(archs.len(), sd, data)?)
            }
            None => None,
        };
        let supp = match (supp, sd) {
            (_, 0) => None,
            (Some(t), _) => Some(t),
            (None, _) => Some(Tensor::zeros(archs.len(), sd)),
        };
        Ok(Batch {
            space: s,
            blocks: archs.len(),
            op_idx,
            hw_idx: vec![dev; archs.len() * n],
            node_idx: (0..archs.len()).flat_map(|_| 0..n).collect(),
            supp,
        })
    }

    fn dgf_vars(tape: &mut Tape<'_>, ids: &DgfIds) -> DgfVars {
        DgfVars {
            w_o: tape.param(ids.w_o),
            w_f: tape.param(ids.w_f),
            b_f: tape.param(ids.b_f),
        }
    }

    fn readout(&self, tape: &mut Tape<'_>, x: Var, batch: &Batch) -> Result<Var> {
        let n = self.plans[batch.space].n();
        match self.config.readout {
            Readout::Sink => {
                let idx: Vec<usize> = (0..batch.blocks).map(|b| b * n + n - 1).collect();
                Ok(tape.gather_rows(x, &idx)?)
            }
            Readout::Mean => {
                let mut m = Tensor::zeros(batch.blocks, batch.blocks * n);
                for b in 0..batch.blocks {
                    for i in 0..n {
                        m.set(b, b * n + i, 1.0 / n as f64);
                    }
                }
                let mv = tape.constant(m);
                Ok(tape.matmul(mv, x)?)
            }
        }
    }

    fn linear(tape: &mut Tape<'_>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var> {
        let (wv, bv) = (tape.param(w), tape.param(b));
        let y = tape.matmul(x, wv)?;
        Ok(tape.add_row(y, bv)?)
    }

    /// Records the full forward pass; `scores` is a blocks x 1 column.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &Batch) -> Result<ForwardVars> {
        let plan = &self.plans[batch.space];
        let n = plan.n();
        let adj = Rc::new(plan.adj.clone());
        let ids = &self.ids;

        let op_tab = tape.param(ids.op_embed[batch.space]);
        let op = tape.gather_rows(op_tab, &batch.op_idx)?;
        let hw_tab = tape.param(ids.hw);
        let hw = tape.gather_rows(hw_tab, &batch.hw_idx)?;
        let joint = tape.concat_cols(op, hw)?;

        let mut x = joint;
        for (l, g) in ids.refine_gcn.iter().enumerate() {
            if l > 0 {
                x = tape.relu(x);
            }
            let v = Self::dgf_vars(tape, g);
            x = dgf_on_tape(tape, x, &adj, joint, v)?;
        }
        for &lin in &ids.refine_mlp {
            let y = Self::linear(tape, x, lin)?;
            x = tape.relu(y);
        }
        let refined = Self::linear(tape, x, ids.refine_out)?;

        let node_tab = tape.param(ids.node_embed[batch.space]);
        let x0 = tape.gather_rows(node_tab, &batch.node_idx)?;

        let mut dgf_out = None;
        if !ids.dgf.is_empty() {
            let mut x = x0;
            for (l, g) in ids.dgf.iter().enumerate() {
                if l > 0 {
                    x = tape.relu(x);
                }
                let v = Self::dgf_vars(tape, g);
                x = dgf_on_tape(tape, x, &adj, refined, v)?;
            }
            dgf_out = Some(self.readout(tape, x, batch)?);
        }
        let mut gat_out = None;
        if !ids.gat.is_empty() {
            let mask: Vec<bool> = (0..batch.blocks).flat_map(|_| plan.mask.iter().copied()).collect();
            let mut x = x0;
            for (l, g) in ids.gat.iter().enumerate() {
                if l > 0 {
                    x = tape.relu(x);
                }
                let v = GatVars {
                    w_p: tape.param(g.w_p),
                    a: tape.param(g.a),
                    w_o: tape.param(g.w_o),
                    gamma: tape.param(g.gamma),
                    beta: tape.param(g.beta),
                };
                let (y, _) = gat_on_tape(
                    tape,
                    x,
                    &mask,
                    n,
                    refined,
                    v,
                    self.config.leaky_slope,
                    self.config.layer_norm_eps,
                )?;
                x = y;
            }
            gat_out = Some(self.readout(tape, x, batch)?);
        }
        let graph_embedding = match (dgf_out, gat_out) {
            (Some(a), Some(b)) => {
                let s = tape.add(a, b)?;
                tape.scale(s, 0.5)
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("config validation guarantees a GNN stack"),
        };
        let head_input = match &batch.supp {
            Some(t) => {
                let sv = tape.constant(t.clone());
                tape.concat_cols(graph_embedding, sv)?
            }
            None => graph_embedding,
        };
        let mut h = head_input;
        for &lin in &ids.head {
            let y = Self::linear(tape, h, lin)?;
            h = tape.relu(y);
        }
        let scores = Self::linear(tape, h, ids.head_out)?;
        Ok(ForwardVars {
            refined,
            dgf_out,
            gat_out,
            graph_embedding,
            head_input,
            scores,
        })
    }

    pub fn trace(&self, batch: &Batch) -> Result<Trace> {
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, batch)?;
        Ok(Trace {
            refined: tape.value(f.refined).clone(),
            dgf_readout: f.dgf_out.map(|v| tape.value(v).clone()),
            gat_readout: f.gat_out.map(|v| tape.value(v).clone()),
            graph_embedding: tape.value(f.graph_embedding).clone(),
            head_input: tape.value(f.head_input).clone(),
            scores: tape.value(f.scores).data().to_vec(),
        })
    }

    pub fn forward_trace(&self, arch: &Architecture, device_id: &str, supplementary: Option<&[f64]>) -> Result<Trace> {
        let supp = supplementary.map(|s| vec![s]);
        let b = self.batch(&[arch], device_id, supp.as_deref())?;
        self.trace(&b)
    }

    /// Per-node refined operation features (lowered node order).
    pub fn refine_op_embeddings(&self, arch: &Architecture, device_id: &str) -> Result<Tensor> {
        let b = self.batch(&[arch], device_id, None)?;
        let mut tape = Tape::new(&self.params);
        let f = self.forward(&mut tape, &b)?;
        Ok(tape.value(f.refined).clone())
    }

    pub fn predict(&self, arch: &Architecture, device_id: &str, supplementary: Option<&[f64]>) -> Result<f64> {
        Ok(self.forward_trace(arch, device_id, supplementary)?.scores[0])
    }

    /// Scores for many architectures, evaluated in chunks; results do not
    /// depend on the chunking.
    pub fn predict_many(
        &self,
        archs: &[&Architecture],
        device_id: &str,
        supplementary: Option<&[&[f64]]>,
    ) -> Result<Vec<f64>> {
        const CHUNK: usize = 32;
        let mut out = Vec::with_capacity(archs.len());
        for (c, chunk) in archs.chunks(CHUNK).enumerate() {
            let supp = supplementary.map(|s| &s[c * CHUNK..c * CHUNK + chunk.len()]);
            let b = self.batch(chunk, device_id, supp)?;
            out.extend(self.trace(&b)?.scores);
        }
        Ok(out)
    }

    /// Writes `params.json` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| PredictorError::Io(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| PredictorError::Io(format!("{}: {e}", p.display())))
        };
        let params = serde_json::to_string(&self.params.to_checkpoint()).expect("serializable checkpoint");
        write("params.json", params + "\n")?;
        let meta = Meta {
            format: META_FORMAT.into(),
            version: META_VERSION,
            config: self.config.clone(),
            spaces: self.spaces.iter().map(|s| s.space_id.clone()).collect(),
            devices: self.devices.clone(),
            calibration: self.calibration.clone(),
        };
        write("meta.json", serde_json::to_string_pretty(&meta).expect("serializable meta") + "\n")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| PredictorError::Io(format!("{}: {e}", p.display())))
        };
        let meta: Meta = serde_json::from_str(&read("meta.json")?)
            .map_err(|e| PredictorError::Checkpoint(format!("meta.json: {e}")))?;
        if meta.format != META_FORMAT || meta.version != META_VERSION {
            return Err(PredictorError::Checkpoint(format!(
                "unsupported predictor metadata {} v{}",
                meta.format, meta.version
            )));
        }
        meta.config.validate().map_err(PredictorError::InvalidConfig)?;
        let spaces = meta
            .spaces
            .iter()
            .map(|id| SearchSpace::by_id(id).ok_or_else(|| PredictorError::UnknownSpace(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        let ck = serde_json::from_str(&read("params.json")?)
            .map_err(|e| PredictorError::Checkpoint(format!("params.json: {e}")))?;
        let params = ParamStore::from_checkpoint(&ck)?;
        let expected = layout(&meta.config, &spaces, meta.devices.len());
        if expected.len() != params.len() {
            return Err(PredictorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for slot in &expected {
            match params.by_name(&slot.name) {
                Some(t) if t.shape() == [slot.rows, slot.cols] => {}
                Some(t) => {
                    return Err(PredictorError::Checkpoint(format!(
                        "{}: shape {:?}, expected [{}, {}]",
                        slot.name,
                        t.shape(),
                        slot.rows,
                        slot.cols
                    )))
                }
                None => return Err(PredictorError::Checkpoint(format!("missing parameter {}", slot.name))),
            }
        }
        Ok(Self::assemble(meta.config, params, spaces, meta.devices, meta.calibration))
    }
}

const META_FORMAT: &str = "nasflat-predictor";
const META_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format: String,
    version: u32,
    config: PredictorConfig,
    spaces: Vec<String>,
    devices: Vec<String>,
    calibration: BTreeMap<String, Calibration>,
}
