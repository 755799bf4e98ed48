//! Central finite differences, the oracle for every analytic gradient.
//!
//! These helpers evaluate the loss only through forward values, so they
//! stay independent of [`Tape::backward`](super::Tape::backward).

use alloc::vec::Vec;

use super::{ParamStore, Tensor};

/// `(f(θ + ε e_i) − f(θ − ε e_i)) / 2ε` for every scalar of every parameter.
pub fn numeric_gradient(store: &ParamStore, eps: f64, f: impl Fn(&ParamStore) -> f64) -> Vec<Tensor> {
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in 0..store.len() {
        let mut g = Tensor::zeros(store.tensor(id).shape());
        for k in 0..store.tensor(id).len() {
            let orig = store.tensor(id).data()[k];
            probe.tensor_mut(id).data_mut()[k] = orig + eps;
            let plus = f(&probe);
            probe.tensor_mut(id).data_mut()[k] = orig - eps;
            let minus = f(&probe);
            probe.tensor_mut(id).data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

/// Central difference of a scalar function of one variable.
pub fn numeric_derivative(x: f64, eps: f64, f: impl Fn(f64) -> f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-3)`, maximized over all entries.
///
/// The floor keeps entries whose true gradient is ~0 from dominating through
/// the finite-difference round-off (about 1e-10 absolute at ε = 1e-5).
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            worst = worst.max(relative_error(*x, *y));
        }
    }
    worst
}

pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR)
}
