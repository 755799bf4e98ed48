use alloc::format;
use alloc::vec::Vec;

use super::metrics::edit_distance;
use crate::error::{Error, Result};
use crate::numerics::{softmax, Tape, Var};

/// N-best minimum word error rate settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MwerConfig {
    /// Hypotheses per utterance.
    pub n: usize,
    /// Exponent applied to hypothesis probabilities before renormalizing.
    pub gamma: f64,
    /// Weight of the interpolated cross-entropy term.
    pub lambda: f64,
}

impl Default for MwerConfig {
    fn default() -> Self {
        MwerConfig {
            n: 4,
            gamma: 0.5,
            lambda: 0.01,
        }
    }
}

impl MwerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("MWER n-best size must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("MWER gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("MWER lambda must be non-negative"));
        }
        Ok(())
    }
}

/// Renormalized scaled posteriors `P*_i ∝ exp(γ · ln P_i)`.
pub fn scaled_posteriors(log_probs: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let scaled: Vec<f64> = log_probs.iter().map(|l| gamma * l).collect();
    softmax(&scaled)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MwerValue {
    pub loss: f64,
    /// `Σ_i P*_i · W_i / L`, the term MWER training drives down.
    pub expected_error: f64,
    pub posteriors: Vec<f64>,
    pub errors: Vec<usize>,
}

/// `(1/L) Σ_i P*_i W(y_i, y*) + λ · ce_loss` over word sequences.
pub fn mwer_loss<S: PartialEq>(
    nbest: &[(Vec<S>, f64)],
    reference: &[S],
    gamma: f64,
    lambda: f64,
    ce_loss: f64,
) -> Result<MwerValue> {
    if nbest.is_empty() {
        return Err(Error::invalid("empty n-best list"));
    }
    if reference.is_empty() {
        return Err(Error::invalid("reference has no words"));
    }
    let logps: Vec<f64> = nbest.iter().map(|(_, l)| *l).collect();
    let posteriors = scaled_posteriors(&logps, gamma)?;
    let errors: Vec<usize> = nbest.iter().map(|(h, _)| edit_distance(reference, h).total()).collect();
    let l = reference.len() as f64;
    let expected_error = posteriors.iter().zip(&errors).map(|(p, &w)| p * w as f64).sum::<f64>() / l;
    Ok(MwerValue {
        loss: expected_error + lambda * ce_loss,
        expected_error,
        posteriors,
        errors,
    })
}

/// Graph form of [`mwer_loss`]: `log_probs` are scalar nodes, `gamma` a
/// scalar node and `errors` the constant word error counts.
pub fn mwer_loss_on(
    tape: &mut Tape<'_>,
    log_probs: &[Var],
    errors: &[f64],
    ref_words: usize,
    gamma: Var,
    lambda: f64,
    ce_loss: Var,
) -> Result<Var> {
    if log_probs.is_empty() || log_probs.len() != errors.len() {
        return Err(Error::invalid("need one error count per hypothesis"));
    }
    if ref_words == 0 {
        return Err(Error::invalid("reference has no words"));
    }
    let row = tape.concat_cols(log_probs)?;
    let scaled = tape.mul_scalar(row, gamma)?;
    let post = tape.softmax(scaled)?;
    let w: Vec<f64> = errors.iter().map(|e| e / ref_words as f64).collect();
    let expected = tape.weighted_sum(post, &w)?;
    let ce = tape.scale(ce_loss, lambda);
    tape.add(expected, ce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::check::{numeric_derivative, relative_error};
    use crate::numerics::Tensor;
    use alloc::vec;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn two_hypothesis_arithmetic() {
        let r = words("a b c d");
        let nb = vec![(words("a b c d"), libm::log(0.8)), (words("a x c y"), libm::log(0.2))];
        let v = mwer_loss(&nb, &r, 0.5, 0.0, 0.0).unwrap();
        let (s8, s2) = (libm::sqrt(0.8), libm::sqrt(0.2));
        assert!((v.posteriors[0] - s8 / (s8 + s2)).abs() < 1e-15);
        assert!((v.posteriors[0] - 0.6667).abs() < 1e-4);
        assert_eq!(v.errors, vec![0, 2]);
        assert!((v.loss - 0.16667).abs() < 1e-5);
    }

    #[test]
    fn degenerate_cases() {
        let r = words("a b");
        let nb = vec![(words("a b"), -1.0), (words("a b"), -3.0)];
        assert!((mwer_loss(&nb, &r, 0.5, 0.01, 2.0).unwrap().loss - 0.02).abs() < 1e-15);
        let one = vec![(words("a"), -2.0)];
        assert!((mwer_loss(&one, &r, 0.5, 0.01, 2.0).unwrap().loss - (0.5 + 0.02)).abs() < 1e-15);
        assert!(mwer_loss(&one, &[] as &[&str], 0.5, 0.0, 0.0).is_err());
    }

    fn tape_loss(gamma: f64, logps: &[f64], errs: &[f64]) -> (f64, f64) {
        let mut t = Tape::new();
        let lp: Vec<Var> = logps.iter().map(|&l| t.variable(Tensor::vector(&[l]))).collect();
        let g = t.variable(Tensor::vector(&[gamma]));
        let ce = t.scalar_constant(1.3);
        let loss = mwer_loss_on(&mut t, &lp, errs, 5, g, 0.01, ce).unwrap();
        let grads = t.backward(loss).unwrap();
        (t.scalar(loss), grads.of(g).unwrap()[0])
    }

    #[test]
    fn gamma_one_is_plain_renormalization() {
        let logps = [-1.0, -2.5, -0.7];
        let errs = [2.0, 0.0, 1.0];
        let z: f64 = logps.iter().map(|l| libm::exp(*l)).sum();
        let want: f64 = logps.iter().zip(&errs).map(|(l, e)| libm::exp(*l) / z * e).sum::<f64>() / 5.0 + 0.013;
        let (got, _) = tape_loss(1.0, &logps, &errs);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn gamma_derivative_matches_finite_differences() {
        let logps = [-1.0, -2.5, -0.7, -4.0];
        let errs = [2.0, 0.0, 1.0, 3.0];
        for gamma in [0.2, 0.5, 1.0] {
            let (_, analytic) = tape_loss(gamma, &logps, &errs);
            let numeric = numeric_derivative(gamma, 1e-5, |g| tape_loss(g, &logps, &errs).0);
            assert!(relative_error(analytic, numeric) < 1e-5, "γ={gamma}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(MwerConfig::default().validate().is_ok());
        assert!(MwerConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(MwerConfig { n: 0, ..Default::default() }.validate().is_err());
    }
}
