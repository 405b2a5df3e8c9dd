use super::{AutodiffError, Gradients, ParamStore, Tensor};

/// First/second moment estimates for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = |s: &ParamStore| {
            s.ids()
                .map(|id| {
                    let t = s.get(id);
                    Tensor::zeros(t.rows(), t.cols())
                })
                .collect::<Vec<_>>()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(store),
            v: zeros(store),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with decoupled weight decay:
/// `p <- p - lr*wd*p`, then the bias-corrected Adam step on `p`.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), AutodiffError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(AutodiffError::ShapeMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for id in params.ids() {
        let (p, g, m) = (params.get(id), grads.get(id), &state.m[id.index()]);
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "parameter {}: {:?} vs grad {:?} vs moment {:?}",
                params.name(id),
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for id in params.ids() {
        let g = grads.get(id).data();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            p[i] -= lr * weight_decay * p[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
