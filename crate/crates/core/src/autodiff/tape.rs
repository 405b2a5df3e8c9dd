use std::borrow::Cow;
use std::rc::Rc;

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::{AutodiffError, Gradients, ParamId, ParamStore, Tensor};

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    MaskedSoftmax(Var),
    LayerNorm(Var, Vec<f64>),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    BlockAggregate(Rc<Tensor>, Var, usize),
    BlockOuter(Var, Var, usize),
    BlockMix(Var, Var, usize),
}

#[derive(Debug, Clone)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

/// Records primitive applications in evaluation order for reverse-mode
/// differentiation. Parameter leaves borrow from the store the tape was
/// created with, so a tape is cheap to build per minibatch.
#[derive(Debug, Clone)]
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node<'a>>,
    kinks: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn shape_err(what: &str, a: [usize; 2], b: [usize; 2]) -> AutodiffError {
    AutodiffError::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a[0], a[1], b[0], b[1]))
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            kinks: FNV_OFFSET,
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Tensor, op: Op) -> Var {
        self.push(Cow::Owned(value), op)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    /// Hash of the sign pattern at every ReLU / leaky-ReLU input recorded so
    /// far. Two evaluations with equal signatures sit on the same linear
    /// piece of every kinked primitive.
    pub fn kink_signature(&self) -> u64 {
        self.kinks
    }

    fn record_kinks(&mut self, x: &Tensor) {
        let mut h = self.kinks;
        for &v in x.data() {
            h ^= u64::from(v > 0.0);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.kinks = h;
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_owned(t, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let params = self.params;
        self.push(Cow::Borrowed(params.get(id)), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa[0], sb[1]);
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            sa[0],
            sa[1],
            sb[1],
        );
        Ok(self.push_owned(out, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(what, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(sa[0], sa[1], data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push_owned(t, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push_owned(t, Op::Mul(a, b)))
    }

    fn row_broadcast(&self, x: Var, r: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sx, sr) = (self.shape(x), self.shape(r));
        if sr[0] != 1 || sr[1] != sx[1] {
            return Err(shape_err(what, sx, sr));
        }
        let row = self.value(r).data();
        let mut out = self.value(x).clone();
        for i in 0..sx[0] {
            for (o, &b) in out.row_mut(i).iter_mut().zip(row) {
                *o = f(*o, b);
            }
        }
        Ok(out)
    }

    /// `x + bias` with a 1 x cols bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let t = self.row_broadcast(x, bias, "add_row", |a, b| a + b)?;
        Ok(self.push_owned(t, Op::AddRow(x, bias)))
    }

    /// `x * r` with a 1 x cols row broadcast over rows.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        let t = self.row_broadcast(x, r, "mul_row", |a, b| a * b)?;
        Ok(self.push_owned(t, Op::MulRow(x, r)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push_owned(t, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v + s);
        self.push_owned(t, Op::AddScalar(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push_owned(t, Op::Sigmoid(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let xv = self.value(x).clone();
        self.record_kinks(&xv);
        let t = xv.map(|v| if v > 0.0 { v } else { slope * v });
        self.push_owned(t, Op::LeakyRelu(x, slope))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        self.record_kinks(&xv);
        let t = xv.map(|v| v.max(0.0));
        self.push_owned(t, Op::Relu(x))
    }

    /// Row softmax restricted to entries where `mask` is true. Rows with no
    /// unmasked entry produce all zeros.
    pub fn masked_row_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let sx = self.shape(x);
        if mask.len() != sx[0] * sx[1] {
            return Err(AutodiffError::ShapeMismatch(format!(
                "mask of {} entries for {}x{} input",
                mask.len(),
                sx[0],
                sx[1]
            )));
        }
        let xv = self.value(x);
        let mut out = Tensor::zeros(sx[0], sx[1]);
        for i in 0..sx[0] {
            let row = xv.row(i);
            let m = &mask[i * sx[1]..(i + 1) * sx[1]];
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let orow = out.row_mut(i);
            let mut z = 0.0;
            for j in 0..sx[1] {
                if m[j] {
                    let e = (row[j] - max).exp();
                    orow[j] = e;
                    z += e;
                }
            }
            for o in orow.iter_mut() {
                *o /= z;
            }
        }
        Ok(self.push_owned(out, Op::MaskedSoftmax(x)))
    }

    /// Normalizes each row to zero mean and unit (population) variance.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let [r, c] = xv.shape();
        let mut out = Tensor::zeros(r, c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        self.push_owned(out, Op::LayerNorm(x, inv_std))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[0] != sb[0] {
            return Err(shape_err("concat_cols", sa, sb));
        }
        let cols = sa[1] + sb[1];
        let mut out = Tensor::zeros(sa[0], cols);
        for i in 0..sa[0] {
            let row = out.row_mut(i);
            row[..sa[1]].copy_from_slice(self.nodes[a.0].value.row(i));
            row[sa[1]..].copy_from_slice(self.nodes[b.0].value.row(i));
        }
        Ok(self.push_owned(out, Op::ConcatCols(a, b)))
    }

    /// Selects rows `idx` of `table` (repeats allowed).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let [r, c] = self.shape(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(AutodiffError::ShapeMismatch(format!("row {bad} of a {r}-row table")));
        }
        let tv = self.value(table);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::from_vec(idx.len(), c, data)?;
        Ok(self.push_owned(out, Op::GatherRows(table, idx.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_owned(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        self.push_owned(Tensor::scalar(s), Op::Mean(x))
    }

    fn check_blocks(&self, x: Var, n: usize, what: &str) -> Result<usize> {
        let r = self.shape(x)[0];
        if n == 0 || !r.is_multiple_of(n) {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{what}: {r} rows are not whole blocks of {n}"
            )));
        }
        Ok(r / n)
    }

    /// Per-block `A X_b` for a constant n x n matrix over stacked blocks of n rows.
    pub fn block_aggregate(&mut self, adj: Rc<Tensor>, x: Var) -> Result<Var> {
        let n = adj.rows();
        if adj.cols() != n {
            return Err(shape_err("block_aggregate matrix", adj.shape(), adj.shape()));
        }
        let blocks = self.check_blocks(x, n, "block_aggregate")?;
        let d = self.shape(x)[1];
        let mut out = Tensor::zeros(blocks * n, d);
        let xv = self.value(x).data();
        for b in 0..blocks {
            let o = b * n * d;
            gemm_acc(adj.data(), &xv[o..o + n * d], &mut out.data_mut()[o..o + n * d], n, n, d);
        }
        Ok(self.push_owned(out, Op::BlockAggregate(adj, x, n)))
    }

    /// Per-block `L_b R_b^T`: output rows (b, i), column j = L[b,i] . R[b,j].
    pub fn block_outer(&mut self, l: Var, r: Var, n: usize) -> Result<Var> {
        let (sl, sr) = (self.shape(l), self.shape(r));
        if sl != sr {
            return Err(shape_err("block_outer", sl, sr));
        }
        let blocks = self.check_blocks(l, n, "block_outer")?;
        let d = sl[1];
        let mut out = Tensor::zeros(blocks * n, n);
        let (lv, rv) = (self.value(l).data(), self.value(r).data());
        for b in 0..blocks {
            let o = b * n * d;
            gemm_nt_acc(
                &lv[o..o + n * d],
                &rv[o..o + n * d],
                &mut out.data_mut()[b * n * n..(b + 1) * n * n],
                n,
                d,
                n,
            );
        }
        Ok(self.push_owned(out, Op::BlockOuter(l, r, n)))
    }

    /// Per-block `P_b H_b` with P stacked as (blocks*n) x n.
    pub fn block_mix(&mut self, p: Var, h: Var) -> Result<Var> {
        let [pr, n] = self.shape(p);
        let sh = self.shape(h);
        if pr != sh[0] {
            return Err(shape_err("block_mix", [pr, n], sh));
        }
        let blocks = self.check_blocks(p, n, "block_mix")?;
        let d = sh[1];
        let mut out = Tensor::zeros(pr, d);
        let (pv, hv) = (self.value(p).data(), self.value(h).data());
        for b in 0..blocks {
            let o = b * n * d;
            gemm_acc(
                &pv[b * n * n..(b + 1) * n * n],
                &hv[o..o + n * d],
                &mut out.data_mut()[o..o + n * d],
                n,
                n,
                d,
            );
        }
        Ok(self.push_owned(out, Op::BlockMix(p, h, n)))
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every
    /// parameter of the store (zero where the loss does not depend on it).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            let s = self.shape(loss);
            return Err(AutodiffError::NonScalarLoss(s[0], s[1]));
        }
        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let [m, k] = av.shape();
                    let n = bv.cols();
                    let mut ga = Tensor::zeros(m, k);
                    gemm_nt_acc(g.data(), bv.data(), ga.data_mut(), m, n, k);
                    let mut gb = Tensor::zeros(k, n);
                    gemm_tn_acc(av.data(), g.data(), gb.data_mut(), m, k, n);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, self.value(*b), |x, y| x * y);
                    let gb = zip(&g, self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, r) => {
                    let gr = col_sums(&g);
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *r, gr);
                }
                Op::MulRow(x, r) => {
                    let rv = self.value(*r);
                    let xv = self.value(*x);
                    let mut gx = g.clone();
                    let mut gr = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            gx.set(i, j, g.get(i, j) * rv.get(0, j));
                            gr.data_mut()[j] += g.get(i, j) * xv.get(i, j);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *r, gr);
                }
                Op::Scale(x, s) => acc(&mut grads, *x, g.map(|v| v * s)),
                Op::AddScalar(x) => acc(&mut grads, *x, g),
                Op::Sigmoid(x) => acc(&mut grads, *x, zip(&g, y, |gv, s| gv * s * (1.0 - s))),
                Op::LeakyRelu(x, slope) => {
                    let gx = zip(&g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { gv * slope });
                    acc(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = zip(&g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    acc(&mut grads, *x, gx);
                }
                Op::MaskedSoftmax(x) => {
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (&yv, &gv)) in gx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm(x, inv_std) => {
                    let c = y.cols() as f64;
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for (i, &inv) in inv_std.iter().enumerate() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let mg = gr.iter().sum::<f64>() / c;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c;
                        for (o, (&yv, &gv)) in gx.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = inv * (gv - mg - yv * mgy);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a)[1];
                    let cb = self.shape(*b)[1];
                    let mut ga = Tensor::zeros(g.rows(), ca);
                    let mut gb = Tensor::zeros(g.rows(), cb);
                    for i in 0..g.rows() {
                        ga.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                        gb.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::GatherRows(t, idx) => {
                    let [r, c] = self.shape(*t);
                    let mut gt = Tensor::zeros(r, c);
                    for (k, &row) in idx.iter().enumerate() {
                        for (o, &gv) in gt.row_mut(row).iter_mut().zip(g.row(k)) {
                            *o += gv;
                        }
                    }
                    acc(&mut grads, *t, gt);
                }
                Op::Sum(x) => {
                    let [r, c] = self.shape(*x);
                    acc(&mut grads, *x, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(x) => {
                    let [r, c] = self.shape(*x);
                    let n = (r * c).max(1) as f64;
                    acc(&mut grads, *x, Tensor::filled(r, c, g.item() / n));
                }
                Op::BlockAggregate(adj, x, n) => {
                    let n = *n;
                    let d = g.cols();
                    let at = adj.transpose();
                    let mut gx = Tensor::zeros(g.rows(), d);
                    for b in 0..g.rows() / n {
                        let o = b * n * d;
                        gemm_acc(at.data(), &g.data()[o..o + n * d], &mut gx.data_mut()[o..o + n * d], n, n, d);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::BlockOuter(l, r, n) => {
                    let n = *n;
                    let (lv, rv) = (self.value(*l), self.value(*r));
                    let d = lv.cols();
                    let mut gl = Tensor::zeros(lv.rows(), d);
                    let mut gr = Tensor::zeros(rv.rows(), d);
                    for b in 0..lv.rows() / n {
                        let o = b * n * d;
                        let gs = &g.data()[b * n * n..(b + 1) * n * n];
                        // dL_b = dS_b R_b ; dR_b = dS_b^T L_b
                        gemm_acc(gs, &rv.data()[o..o + n * d], &mut gl.data_mut()[o..o + n * d], n, n, d);
                        gemm_tn_acc(gs, &lv.data()[o..o + n * d], &mut gr.data_mut()[o..o + n * d], n, n, d);
                    }
                    acc(&mut grads, *l, gl);
                    acc(&mut grads, *r, gr);
                }
                Op::BlockMix(p, h, n) => {
                    let n = *n;
                    let (pv, hv) = (self.value(*p), self.value(*h));
                    let d = hv.cols();
                    let mut gp = Tensor::zeros(pv.rows(), n);
                    let mut gh = Tensor::zeros(hv.rows(), d);
                    for b in 0..pv.rows() / n {
                        let o = b * n * d;
                        let po = b * n * n;
                        let gy = &g.data()[o..o + n * d];
                        // dP_b = dY_b H_b^T ; dH_b = P_b^T dY_b
                        gemm_nt_acc(gy, &hv.data()[o..o + n * d], &mut gp.data_mut()[po..po + n * n], n, d, n);
                        gemm_tn_acc(&pv.data()[po..po + n * n], gy, &mut gh.data_mut()[o..o + n * d], n, n, d);
                    }
                    acc(&mut grads, *p, gp);
                    acc(&mut grads, *h, gh);
                }
            }
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (o, &v) in out.data_mut().iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    out
}
