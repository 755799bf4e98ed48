//! Every differentiable tape op against central finite differences.

use las_core::numerics::check::relative_error;
use las_core::numerics::{Prng, Tape, Tensor, Var};
use proptest::prelude::*;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], prng: &mut Prng, positive: bool) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = if positive {
            0.5 + prng.next_f64() * 2.0
        } else {
            prng.normal()
        };
    }
    t
}

/// Builds `op` on variables, reduces the output with fixed random weights,
/// and compares the analytic input gradients with central differences.
fn check_op(inputs: Vec<Tensor>, prng: &mut Prng, op: impl Fn(&mut Tape<'_>, &[Var]) -> Var) -> f64 {
    let out_len = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.variable(x.clone())).collect();
        let y = op(&mut t, &vars);
        t.value(y).len()
    };
    let weights: Vec<f64> = (0..out_len).map(|_| prng.normal()).collect();
    let eval = |xs: &[Tensor]| -> (f64, Vec<Vec<f64>>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.variable(x.clone())).collect();
        let y = op(&mut t, &vars);
        let loss = t.weighted_sum(y, &weights).unwrap();
        let g = t.backward(loss).unwrap();
        let grads = vars
            .iter()
            .zip(xs)
            .map(|(v, x)| g.of(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; x.len()]))
            .collect();
        (t.scalar(loss), grads)
    };
    let (_, analytic) = eval(&inputs);
    let mut worst: f64 = 0.0;
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += EPS;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= EPS;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * EPS);
            worst = worst.max(relative_error(analytic[i][k], numeric));
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_and_matmul(seed in any::<u64>(), r in 1usize..6, n_in in 1usize..16, n_out in 1usize..16) {
        let mut p = Prng::new(seed);
        let xs = vec![random(&[r, n_in], &mut p, false), random(&[n_out, n_in], &mut p, false), random(&[n_out], &mut p, false)];
        let e = check_op(xs, &mut p, |t, v| t.linear(v[0], v[1], Some(v[2])).unwrap());
        prop_assert!(e < TOL, "linear {e}");
        let ys = vec![random(&[r, n_in], &mut p, false), random(&[n_in, n_out], &mut p, false)];
        let e = check_op(ys, &mut p, |t, v| t.matmul(v[0], v[1]).unwrap());
        prop_assert!(e < TOL, "matmul {e}");
    }

    #[test]
    fn elementwise(seed in any::<u64>(), n in 1usize..16) {
        let mut p = Prng::new(seed);
        let two = || vec![random(&[n], &mut Prng::new(seed ^ 1), false), random(&[n], &mut Prng::new(seed ^ 2), false)];
        prop_assert!(check_op(two(), &mut p, |t, v| t.add(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check_op(two(), &mut p, |t, v| t.sub(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check_op(two(), &mut p, |t, v| t.mul(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check_op(two(), &mut p, |t, v| t.mul(v[0], v[0]).unwrap()) < TOL);
        let one = || vec![random(&[n], &mut Prng::new(seed ^ 3), false)];
        prop_assert!(check_op(one(), &mut p, |t, v| t.sigmoid(v[0])) < TOL);
        prop_assert!(check_op(one(), &mut p, |t, v| t.tanh(v[0])) < TOL);
        prop_assert!(check_op(one(), &mut p, |t, v| t.exp(v[0])) < TOL);
        prop_assert!(check_op(one(), &mut p, |t, v| t.scale(v[0], -1.7)) < TOL);
        prop_assert!(check_op(one(), &mut p, |t, v| t.sum(v[0])) < TOL);
        let pos = vec![random(&[n], &mut p, true)];
        prop_assert!(check_op(pos, &mut p, |t, v| t.ln(v[0]).unwrap()) < TOL);
        let ms = vec![random(&[n], &mut p, false), random(&[1], &mut p, false)];
        prop_assert!(check_op(ms, &mut p, |t, v| t.mul_scalar(v[0], v[1]).unwrap()) < TOL);
    }

    #[test]
    fn structural(seed in any::<u64>(), r in 1usize..6, c in 2usize..16) {
        let mut p = Prng::new(seed);
        let m = || vec![random(&[r, c], &mut Prng::new(seed ^ 5), false), random(&[c], &mut Prng::new(seed ^ 6), false)];
        prop_assert!(check_op(m(), &mut p, |t, v| t.add_row(v[0], v[1]).unwrap()) < TOL);
        let a = vec![random(&[r, c], &mut p, false), random(&[r, 3], &mut p, false)];
        prop_assert!(check_op(a, &mut p, |t, v| t.concat_cols(&[v[0], v[1], v[0]]).unwrap()) < TOL);
        let b = vec![random(&[r, c], &mut p, false), random(&[2, c], &mut p, false)];
        prop_assert!(check_op(b, &mut p, |t, v| t.concat_rows(&[v[1], v[0]]).unwrap()) < TOL);
        let s = vec![random(&[r, c], &mut p, false)];
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.slice_cols(v[0], 1, c - 1).unwrap()) < TOL);
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.slice_rows(v[0], r - 1, 1).unwrap()) < TOL);
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.reshape(v[0], &[r * c]).unwrap()) < TOL);
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.softmax(v[0]).unwrap()) < TOL);
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.log_softmax(v[0]).unwrap()) < TOL);
        prop_assert!(check_op(s.clone(), &mut p, |t, v| t.pick(v[0], c / 2).unwrap()) < TOL);
        let e = check_op(s, &mut p, |t, v| {
            let x = t.tanh(v[0]);
            t.add_n(&[x, v[0], x]).unwrap()
        });
        prop_assert!(e < TOL);
    }

    #[test]
    fn conv1d(seed in any::<u64>(), u in 1usize..16, f in 1usize..5, k in 1usize..8) {
        let mut p = Prng::new(seed);
        let xs = vec![random(&[u], &mut p, false), random(&[f, k], &mut p, false)];
        prop_assert!(check_op(xs, &mut p, |t, v| t.conv1d(v[0], v[1]).unwrap()) < TOL);
        let ys = vec![random(&[u, 2], &mut p, false), random(&[f, 2, k], &mut p, false)];
        prop_assert!(check_op(ys, &mut p, |t, v| t.conv1d(v[0], v[1]).unwrap()) < TOL);
    }
}

#[test]
fn sum_gives_ones() {
    let mut t = Tape::new();
    let x = t.variable(Tensor::vector(&[1.0, -2.0, 3.0]));
    let loss = t.sum(x);
    let g = t.backward(loss).unwrap();
    assert_eq!(g.of(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn unused_parameter_gets_exact_zero() {
    let mut store = las_core::numerics::ParamStore::new();
    store.insert("used", Tensor::vector(&[2.0])).unwrap();
    store.insert("unused", Tensor::vector(&[5.0, 6.0])).unwrap();
    let mut t = Tape::with_params(&store);
    let u = t.param("used").unwrap();
    let loss = t.mul(u, u).unwrap();
    let g = t.backward(loss).unwrap();
    assert_eq!(g.param(&store, "used").unwrap().data(), &[4.0]);
    assert_eq!(g.param(&store, "unused").unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut t = Tape::new();
    let x = t.variable(Tensor::vector(&[1.0, 2.0]));
    assert!(matches!(t.backward(x), Err(las_core::Error::InvalidArgument(_))));
}

#[test]
fn non_finite_gradient_names_the_parameter() {
    let mut store = las_core::numerics::ParamStore::new();
    store.insert("w", Tensor::vector(&[1e300])).unwrap();
    let mut t = Tape::with_params(&store);
    let w = t.param("w").unwrap();
    let big = t.mul(w, w).unwrap();
    let loss = t.mul(big, w).unwrap();
    match t.backward(loss) {
        Err(las_core::Error::NumericDomain(m)) => assert!(m.contains("w"), "{m}"),
        other => panic!("expected numeric error, got {other:?}"),
    }
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut p = Prng::new(77);
        let mut t = Tape::new();
        let a = t.variable(random(&[3, 5], &mut p, false));
        let w = t.variable(random(&[4, 5], &mut p, false));
        let y = t.linear(a, w, None).unwrap();
        let s = t.log_softmax(y).unwrap();
        let l = t.sum(s);
        let g = t.backward(l).unwrap();
        (t.scalar(l).to_bits(), g.of(w).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
