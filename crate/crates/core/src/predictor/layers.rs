use std::rc::Rc;

use crate::autodiff::{AutodiffError, ParamStore, Tape, Tensor, Var};

/// Tape handles for one DGF layer.
#[derive(Debug, Clone, Copy)]
pub struct DgfVars {
    pub w_o: Var,
    pub w_f: Var,
    pub b_f: Var,
}

/// Tape handles for one GAT layer.
#[derive(Debug, Clone, Copy)]
pub struct GatVars {
    pub w_p: Var,
    pub a: Var,
    pub w_o: Var,
    pub gamma: Var,
    pub beta: Var,
}

/// `sigmoid(O W_o) * (A X W_f) + X W_f + b_f`, applied per block of n rows.
pub fn dgf_on_tape(
    tape: &mut Tape<'_>,
    x: Var,
    adj: &Rc<Tensor>,
    o: Var,
    w: DgfVars,
) -> Result<Var, AutodiffError> {
    let xw = tape.matmul(x, w.w_f)?;
    let agg = tape.block_aggregate(Rc::clone(adj), xw)?;
    let gl = tape.matmul(o, w.w_o)?;
    let gate = tape.sigmoid(gl);
    let gated = tape.mul(gate, agg)?;
    let sum = tape.add(gated, xw)?;
    tape.add_row(sum, w.b_f)
}

/// Masked single-head attention followed by the op gate and an affine
/// LayerNorm. Returns (output, attention matrix stacked per block).
#[allow(clippy::too_many_arguments)]
pub fn gat_on_tape(
    tape: &mut Tape<'_>,
    x: Var,
    mask: &[bool],
    n: usize,
    o: Var,
    w: GatVars,
    slope: f64,
    eps: f64,
) -> Result<(Var, Var), AutodiffError> {
    let h = tape.matmul(x, w.w_p)?;
    let ha = tape.mul_row(h, w.a)?;
    let raw = tape.block_outer(ha, h, n)?;
    let s = tape.leaky_relu(raw, slope);
    let attn = tape.masked_row_softmax(s, mask)?;
    let agg = tape.block_mix(attn, h)?;
    let gl = tape.matmul(o, w.w_o)?;
    let gate = tape.sigmoid(gl);
    let gated = tape.mul(gate, agg)?;
    let ln = tape.layer_norm(gated, eps);
    let scaled = tape.mul_row(ln, w.gamma)?;
    Ok((tape.add_row(scaled, w.beta)?, attn))
}

/// Weights of a single DGF layer as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DgfWeights {
    pub w_o: Tensor,
    pub w_f: Tensor,
    pub b_f: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatWeights {
    pub w_p: Tensor,
    pub a: Tensor,
    pub w_o: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatOutput {
    pub out: Tensor,
    /// Row i holds node i's attention over all nodes (zero off-mask).
    pub attention: Tensor,
}

fn check_square(a: &Tensor, x: &Tensor, o: &Tensor) -> Result<(), AutodiffError> {
    let n = x.rows();
    if a.shape() != [n, n] || o.rows() != n {
        return Err(AutodiffError::ShapeMismatch(format!(
            "X {:?}, A {:?}, O {:?}",
            x.shape(),
            a.shape(),
            o.shape()
        )));
    }
    Ok(())
}

/// One DGF layer on a single graph. `a[i][j] = 1` aggregates node j into i.
pub fn dgf_layer(x: &Tensor, a: &Tensor, o: &Tensor, w: &DgfWeights) -> Result<Tensor, AutodiffError> {
    check_square(a, x, o)?;
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let vars = DgfVars {
        w_o: t.constant(w.w_o.clone()),
        w_f: t.constant(w.w_f.clone()),
        b_f: t.constant(w.b_f.clone()),
    };
    let (xv, ov) = (t.constant(x.clone()), t.constant(o.clone()));
    let out = dgf_on_tape(&mut t, xv, &Rc::new(a.clone()), ov, vars)?;
    Ok(t.value(out).clone())
}

/// One GAT layer on a single graph; nonzero `a[i][j]` marks j as an in-neighbor of i.
pub fn gat_layer(
    x: &Tensor,
    a: &Tensor,
    o: &Tensor,
    w: &GatWeights,
    slope: f64,
    eps: f64,
) -> Result<GatOutput, AutodiffError> {
    check_square(a, x, o)?;
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let vars = GatVars {
        w_p: t.constant(w.w_p.clone()),
        a: t.constant(w.a.clone()),
        w_o: t.constant(w.w_o.clone()),
        gamma: t.constant(w.gamma.clone()),
        beta: t.constant(w.beta.clone()),
    };
    let mask: Vec<bool> = a.data().iter().map(|&v| v != 0.0).collect();
    let (xv, ov) = (t.constant(x.clone()), t.constant(o.clone()));
    let (out, attn) = gat_on_tape(&mut t, xv, &mask, x.rows(), ov, vars, slope, eps)?;
    Ok(GatOutput {
        out: t.value(out).clone(),
        attention: t.value(attn).clone(),
    })
}
