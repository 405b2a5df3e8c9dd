//! Per-primitive gradient checks against central differences.

use std::rc::Rc;

use nasflat::autodiff::{
    finite_diff_check, sigmoid, AutodiffError, EvalPoint, FdOptions, ParamId, ParamStore, Tape, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c)
        .map(|_| {
            // keep clear of ReLU kinks
            let v: f64 = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::from_vec(r, c, data).unwrap()
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>;

/// Checks every input element of a primitive: loss = sum(out * W) for a
/// fixed random W, compared against central differences (h = 1e-5).
fn check_primitive(name: &str, shapes: &[[usize; 2]], build: &Build) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 7919);
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| store.add(format!("in{i}"), rand_tensor(&mut rng, s[0], s[1])))
        .collect();
    let probe = {
        let mut tape = Tape::new(&store);
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(id)).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).clone()
    };
    let weights = rand_tensor(&mut rng, probe.rows(), probe.cols());
    let eval = |s: &ParamStore| -> (f64, Option<nasflat::autodiff::Gradients>, u64) {
        let mut tape = Tape::new(s);
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(id)).collect();
        let out = build(&mut tape, &vars).unwrap();
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        let g = tape.backward(loss).unwrap();
        (tape.value(loss).item(), Some(g), tape.kink_signature())
    };
    let (_, grads, _) = eval(&store);
    let grads = grads.unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for &id in &ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + h;
            let (fp, _, _) = eval(&work);
            work.get_mut(id).data_mut()[k] = orig - h;
            let (fm, _, _) = eval(&work);
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = grads.get(id).data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
            worst = worst.max(rel);
        }
    }
    println!("{name}: max rel err {worst:.3e}");
    assert!(worst < 1e-6, "{name}: max rel err {worst}");
}

#[test]
fn matmul() {
    check_primitive("matmul", &[[3, 4], [4, 2]], &|t, v| t.matmul(v[0], v[1]));
}

#[test]
fn add_and_mul() {
    check_primitive("add", &[[2, 3], [2, 3]], &|t, v| t.add(v[0], v[1]));
    check_primitive("mul", &[[2, 3], [2, 3]], &|t, v| t.mul(v[0], v[1]));
}

#[test]
fn row_broadcasts() {
    check_primitive("add_row", &[[4, 3], [1, 3]], &|t, v| t.add_row(v[0], v[1]));
    check_primitive("mul_row", &[[4, 3], [1, 3]], &|t, v| t.mul_row(v[0], v[1]));
}

#[test]
fn scalar_ops() {
    check_primitive("scale", &[[2, 2]], &|t, v| Ok(t.scale(v[0], -1.7)));
    check_primitive("add_scalar", &[[2, 2]], &|t, v| Ok(t.add_scalar(v[0], 0.3)));
}

#[test]
fn activations() {
    check_primitive("sigmoid", &[[3, 3]], &|t, v| Ok(t.sigmoid(v[0])));
    check_primitive("leaky_relu", &[[3, 3]], &|t, v| Ok(t.leaky_relu(v[0], 0.2)));
    check_primitive("relu", &[[3, 3]], &|t, v| Ok(t.relu(v[0])));
}

#[test]
fn masked_softmax() {
    let mask = vec![true, false, true, true, false, false, false, false, true, true, true, true];
    check_primitive("masked_softmax", &[[3, 4]], &move |t, v| t.masked_row_softmax(v[0], &mask));
}

#[test]
fn layer_norm() {
    check_primitive("layer_norm", &[[3, 5]], &|t, v| Ok(t.layer_norm(v[0], 1e-5)));
}

#[test]
fn concat_gather_reduce() {
    check_primitive("concat_cols", &[[3, 2], [3, 4]], &|t, v| t.concat_cols(v[0], v[1]));
    check_primitive("gather_rows", &[[4, 3]], &|t, v| t.gather_rows(v[0], &[2, 0, 2, 3]));
    check_primitive("sum", &[[3, 3]], &|t, v| Ok(t.sum(v[0])));
    check_primitive("mean", &[[3, 3]], &|t, v| Ok(t.mean(v[0])));
}

#[test]
fn block_ops() {
    let adj = Rc::new(Tensor::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]).unwrap());
    check_primitive("block_aggregate", &[[6, 4]], &move |t, v| t.block_aggregate(adj.clone(), v[0]));
    check_primitive("block_outer", &[[6, 4], [6, 4]], &|t, v| t.block_outer(v[0], v[1], 3));
    check_primitive("block_mix", &[[6, 3], [6, 4]], &|t, v| t.block_mix(v[0], v[1]));
}

#[test]
fn sigmoid_of_zero() {
    assert_eq!(sigmoid(0.0), 0.5);
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::scalar(0.0));
    let y = t.sigmoid(x);
    assert_eq!(t.value(y).item(), 0.5);
}

#[test]
fn softmax_singleton_and_empty_rows() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::from_rows(&[vec![3.0, -2.0, 7.0], vec![1.0, 1.0, 1.0]]).unwrap());
    let y = t.masked_row_softmax(x, &[false, true, false, false, false, false]).unwrap();
    assert_eq!(t.value(y).row(0), &[0.0, 1.0, 0.0]);
    assert_eq!(t.value(y).row(1), &[0.0, 0.0, 0.0]);
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::filled(2, 6, 4.25));
    let y = t.layer_norm(x, 1e-5);
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn square_gradient() {
    let mut s = ParamStore::new();
    let id = s.add("x", Tensor::scalar(3.0));
    let mut t = Tape::new(&s);
    let x = t.param(id);
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(id).item(), 6.0);
}

#[test]
fn unused_param_gets_zero_gradient() {
    let mut s = ParamStore::new();
    let used = s.add("u", Tensor::scalar(1.5));
    let unused = s.add("z", Tensor::filled(2, 2, 9.0));
    let mut t = Tape::new(&s);
    let x = t.param(used);
    let y = t.sigmoid(x);
    let g = t.backward(y).unwrap();
    assert!(g.get(used).item() > 0.0);
    assert_eq!(g.get(unused), &Tensor::zeros(2, 2));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let x = t.constant(Tensor::zeros(2, 1));
    assert_eq!(t.backward(x), Err(AutodiffError::NonScalarLoss(2, 1)));
}

#[test]
fn shape_mismatch_is_reported() {
    let s = ParamStore::new();
    let mut t = Tape::new(&s);
    let a = t.constant(Tensor::zeros(2, 3));
    let b = t.constant(Tensor::zeros(2, 3));
    assert!(matches!(t.matmul(a, b), Err(AutodiffError::ShapeMismatch(_))));
    let c = t.constant(Tensor::zeros(1, 2));
    assert!(t.add_row(a, c).is_err());
    assert!(t.block_outer(a, b, 4).is_err());
}

/// loss = sum(sigmoid(W x)) against central differences.
#[test]
fn sigmoid_of_linear_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::new();
    let w = s.add("w", rand_tensor(&mut rng, 4, 3));
    let xin = rand_tensor(&mut rng, 3, 1);
    let run = |p: &ParamStore| {
        let mut t = Tape::new(p);
        let wv = t.param(w);
        let xv = t.constant(xin.clone());
        let z = t.matmul(wv, xv).unwrap();
        let y = t.sigmoid(z);
        let loss = t.sum(y);
        (EvalPoint { loss: t.value(loss).item(), kinks: t.kink_signature() }, t.backward(loss).unwrap())
    };
    let (_, g) = run(&s);
    let opts = FdOptions { samples: 12, tolerance: 1e-6, ..FdOptions::default() };
    let report = finite_diff_check(|p| run(p).0, &s, &g, &opts);
    assert!(report.passed, "{report:?}");
}

#[test]
fn linear_model_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = ParamStore::new();
    let w = s.add("w", rand_tensor(&mut rng, 1, 5));
    let b = s.add("b", rand_tensor(&mut rng, 1, 1));
    let xin = rand_tensor(&mut rng, 5, 1);
    let run = |p: &ParamStore| {
        let mut t = Tape::new(p);
        let wv = t.param(w);
        let bv = t.param(b);
        let xv = t.constant(xin.clone());
        let z = t.matmul(wv, xv).unwrap();
        let y = t.add(z, bv).unwrap();
        (EvalPoint { loss: t.value(y).item(), kinks: t.kink_signature() }, t.backward(y).unwrap())
    };
    let (_, g) = run(&s);
    let opts = FdOptions { samples: 6, tolerance: 1e-9, abs_floor: 1e-3, ..FdOptions::default() };
    let report = finite_diff_check(|p| run(p).0, &s, &g, &opts);
    assert!(report.passed, "{report:?}");
}

/// A ReLU placed exactly on its kink is never sampled by the checker.
#[test]
fn kinked_parameter_is_excluded() {
    let mut s = ParamStore::new();
    let k = s.add("kink", Tensor::scalar(0.0));
    let smooth = s.add("smooth", Tensor::scalar(0.7));
    let run = |p: &ParamStore| {
        let mut t = Tape::new(p);
        let kv = t.param(k);
        let sv = t.param(smooth);
        let r = t.relu(kv);
        let q = t.mul(sv, sv).unwrap();
        let y = t.add(r, q).unwrap();
        (EvalPoint { loss: t.value(y).item(), kinks: t.kink_signature() }, t.backward(y).unwrap())
    };
    let (_, g) = run(&s);
    let opts = FdOptions { samples: 10, tolerance: 1e-6, ..FdOptions::default() };
    let report = finite_diff_check(|p| run(p).0, &s, &g, &opts);
    assert!(report.passed, "{report:?}");
    assert!(report.skipped_kinks > 0);
    assert_eq!(report.worst.as_ref().unwrap().0, "smooth");
}

#[test]
fn tape_replay_is_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = ParamStore::new();
    let w = s.add("w", rand_tensor(&mut rng, 6, 6));
    let run = |p: &ParamStore| {
        let mut t = Tape::new(p);
        let wv = t.param(w);
        let a = t.matmul(wv, wv).unwrap();
        let b = t.layer_norm(a, 1e-5);
        let c = t.leaky_relu(b, 0.2);
        let l = t.mean(c);
        (t.value(l).clone(), t.len(), t.kink_signature(), t.backward(l).unwrap())
    };
    assert_eq!(run(&s), run(&s));
}
