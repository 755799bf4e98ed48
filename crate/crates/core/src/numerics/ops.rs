//! Value-level kernels shared by the tape and by callers that only need
//! forward values.

use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("softmax input is not finite"));
    }
    let mut out = vec![0.0; v.len()];
    softmax_into(v, &mut out);
    Ok(out)
}

/// Log-softmax of a finite, non-empty vector.
pub fn log_softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("log_softmax of an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("log_softmax input is not finite"));
    }
    let mut out = vec![0.0; v.len()];
    log_softmax_into(v, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(v: &[f64], out: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = libm::exp(x - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn log_softmax_into(v: &[f64], out: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = v.iter().map(|x| libm::exp(x - max)).sum();
    let lse = max + libm::log(total);
    for (o, x) in out.iter_mut().zip(v) {
        *o = x - lse;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Geometry of a same-padded 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub len: usize,
    pub channels: usize,
    pub filters: usize,
    pub width: usize,
}

impl ConvShape {
    /// Left zero-padding; the right side receives `width - 1 - left_pad`.
    pub fn left_pad(&self) -> usize {
        (self.width - 1) / 2
    }
}

/// Works out the convolution geometry.
///
/// Filters of shape `[F, K]` take a single-channel signal of any shape
/// (its values are read as a length-`U` sequence). Filters of shape
/// `[F, C, K]` take a `[U, C]` signal.
pub(crate) fn conv_shape(signal: &Tensor, filters: &Tensor) -> Result<ConvShape> {
    if signal.is_empty() {
        return Err(Error::invalid("conv1d of an empty signal"));
    }
    match filters.shape() {
        [f, k] => Ok(ConvShape {
            len: signal.len(),
            channels: 1,
            filters: *f,
            width: *k,
        }),
        [f, c, k] => {
            let (u, sc) = signal.dims2();
            if sc != *c {
                return Err(Error::invalid(alloc::format!(
                    "conv1d signal has {sc} channels, filters expect {c}"
                )));
            }
            Ok(ConvShape {
                len: u,
                channels: *c,
                filters: *f,
                width: *k,
            })
        }
        s => Err(Error::invalid(alloc::format!("conv1d filters must be rank 2 or 3, got {s:?}"))),
    }
}

/// Same-padded cross-correlation: `out[j][f] = Σ_c Σ_k F[f][c][k] · x[j + k - pad][c]`.
///
/// Output is `[U, F]`.
pub fn conv1d(signal: &Tensor, filters: &Tensor) -> Result<Tensor> {
    let cs = conv_shape(signal, filters)?;
    let mut out = vec![0.0; cs.len * cs.filters];
    conv1d_forward(cs, signal.data(), filters.data(), &mut out);
    Tensor::matrix(cs.len, cs.filters, out)
}

pub(crate) fn conv1d_forward(cs: ConvShape, x: &[f64], w: &[f64], out: &mut [f64]) {
    let pad = cs.left_pad() as isize;
    for j in 0..cs.len {
        for f in 0..cs.filters {
            let mut acc = 0.0;
            for c in 0..cs.channels {
                let wrow = &w[(f * cs.channels + c) * cs.width..][..cs.width];
                for (k, wk) in wrow.iter().enumerate() {
                    let t = j as isize + k as isize - pad;
                    if t >= 0 && (t as usize) < cs.len {
                        acc += wk * x[t as usize * cs.channels + c];
                    }
                }
            }
            out[j * cs.filters + f] = acc;
        }
    }
}

/// Accumulates gradients of [`conv1d_forward`] into `dx` and `dw` (either may be skipped).
pub(crate) fn conv1d_backward(
    cs: ConvShape,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
) {
    let pad = cs.left_pad() as isize;
    for j in 0..cs.len {
        for f in 0..cs.filters {
            let g = dout[j * cs.filters + f];
            if g == 0.0 {
                continue;
            }
            for c in 0..cs.channels {
                let base = (f * cs.channels + c) * cs.width;
                for k in 0..cs.width {
                    let t = j as isize + k as isize - pad;
                    if t < 0 || t as usize >= cs.len {
                        continue;
                    }
                    let xi = t as usize * cs.channels + c;
                    if let Some(dx) = dx.as_deref_mut() {
                        dx[xi] += g * w[base + k];
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[base + k] += g * x[xi];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&softmax(&[0.0, 0.0, 0.0]).unwrap(), &[third; 3], 1e-15));
        assert_eq!(softmax(&[4.2]).unwrap(), vec![1.0]);
        // exp(ln k) = k, sum 6.
        let p = softmax(&[libm::log(1.0), libm::log(2.0), libm::log(3.0)]).unwrap();
        assert!(close(&p, &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0], 1e-15));
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax(&[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::NumericDomain(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conv_examples() {
        let x = Tensor::vector(&[1.0, 2.0, 3.0]);
        let ones = Tensor::matrix(1, 3, vec![1.0; 3]).unwrap();
        assert_eq!(conv1d(&x, &ones).unwrap().data(), &[3.0, 6.0, 5.0]);

        let impulse = Tensor::matrix(1, 5, vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(conv1d(&x, &impulse).unwrap().data(), x.data());

        let zero = Tensor::zeros(&[4]);
        let f = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.5, 0.5, 0.1]).unwrap();
        assert!(conv1d(&zero, &f).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_even_width_pads_right_more() {
        // K = 4: left pad 1, right pad 2.
        let x = Tensor::vector(&[1.0, 2.0, 3.0]);
        let f = Tensor::matrix(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(conv1d(&x, &f).unwrap().data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv_multichannel() {
        // Two channels, identity on channel 1 only.
        let x = Tensor::matrix(3, 2, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]).unwrap();
        let f = Tensor::new(vec![1, 2, 1], vec![0.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &f).unwrap().data(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn conv_rejects_empty_and_mismatch() {
        let f = Tensor::new(vec![1, 2, 1], vec![0.0, 1.0]).unwrap();
        let x = Tensor::matrix(3, 3, vec![0.0; 9]).unwrap();
        assert!(conv1d(&x, &f).is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(v in proptest::collection::vec(-30.0f64..30.0, 1..16), c in -50.0f64..50.0) {
            let a = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            prop_assert!(close(&a, &b, 1e-12));
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn conv_is_linear(
            x in proptest::collection::vec(-5.0f64..5.0, 1..16),
            y_seed in proptest::collection::vec(-5.0f64..5.0, 16),
            w in proptest::collection::vec(-2.0f64..2.0, 6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = y_seed[..x.len()].to_vec();
            let f = Tensor::matrix(2, 3, w).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = conv1d(&Tensor::vector(&mix), &f).unwrap();
            let cx = conv1d(&Tensor::vector(&x), &f).unwrap();
            let cy = conv1d(&Tensor::vector(&y), &f).unwrap();
            let rhs: Vec<f64> = cx.data().iter().zip(cy.data()).map(|(p, q)| a * p + b * q).collect();
            prop_assert!(close(lhs.data(), &rhs, 1e-10));
            prop_assert_eq!(lhs.rows(), x.len());
        }
    }
}
