use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::attention::EncoderMemory;
use super::listener::listen_on;
use super::speller::{decode_step, SpellerState, SpellerVars};
use super::LasModel;
use crate::error::{Error, Result};
use crate::numerics::{Prng, Tape, Tensor, Var};
use crate::wordpiece::{BOS, EOS};
use crate::TokenId;

/// Smoothed target: `1 - ε` on `truth`, `ε / (K - 1)` elsewhere.
pub fn smooth_labels(truth: TokenId, vocab: usize, epsilon: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("smoothing {epsilon} outside [0, 1)")));
    }
    if vocab < 2 {
        return Err(Error::invalid("smoothing needs at least two classes"));
    }
    if truth as usize >= vocab {
        return Err(Error::invalid(format!("token {truth} outside vocabulary of {vocab}")));
    }
    let other = epsilon / (vocab - 1) as f64;
    let mut q = vec![other; vocab];
    q[truth as usize] = 1.0 - epsilon;
    Ok(q)
}

/// One training utterance: features `[T, D]` and tokens ending in `</s>`
/// (without a leading `<s>`).
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub features: &'a Tensor,
    pub tokens: &'a [TokenId],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeOptions {
    pub sampling_prob: f64,
    pub smoothing: f64,
}

impl Default for CeOptions {
    fn default() -> Self {
        CeOptions {
            sampling_prob: 0.0,
            smoothing: 0.01,
        }
    }
}

/// Per-step record from [`forward_ce`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiag {
    pub utterance: usize,
    pub step: usize,
    pub truth: TokenId,
    /// Token fed as the previous prediction at this step.
    pub fed: TokenId,
    /// Model probability of `truth` at this step.
    pub truth_prob: f64,
}

#[derive(Clone, Debug)]
pub struct CeOutput {
    /// Scalar mean cross-entropy over every step in the batch.
    pub loss: Var,
    pub steps: Vec<StepDiag>,
}

fn check_tokens(tokens: &[TokenId], vocab: usize) -> Result<()> {
    match tokens.last() {
        None => Err(Error::invalid("empty token sequence")),
        Some(&t) if t != EOS => Err(Error::invalid("token sequence must end with </s>")),
        _ => match tokens.iter().find(|&&t| t as usize >= vocab) {
            Some(t) => Err(Error::invalid(format!("token {t} outside vocabulary of {vocab}"))),
            None => Ok(()),
        },
    }
}

/// Builds the label-smoothed cross-entropy graph for a batch.
///
/// With probability `sampling_prob` the token fed at step `i > 0` is drawn
/// from the model's step `i - 1` distribution instead of the ground truth.
/// The draw is a constant; no gradient flows through it. When the
/// probability is zero the generator is never consulted.
pub fn forward_ce<'a>(
    tape: &mut Tape<'a>,
    model: &LasModel,
    batch: &[Example<'a>],
    opts: &CeOptions,
    prng: &mut Prng,
) -> Result<CeOutput> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if !(0.0..=1.0).contains(&opts.sampling_prob) {
        return Err(Error::invalid(format!("sampling probability {} outside [0, 1]", opts.sampling_prob)));
    }
    let k = model.config.vocab_size;
    for ex in batch {
        check_tokens(ex.tokens, k)?;
    }
    let vars = SpellerVars::bind(tape, model)?;
    let mut terms = Vec::new();
    let mut steps = Vec::new();
    for (n, ex) in batch.iter().enumerate() {
        let x = tape.constant_ref(ex.features);
        let h = listen_on(tape, model, x)?;
        let memory = EncoderMemory::new(tape, &vars.attention, h)?;
        let mut state = SpellerState::initial(tape, model, memory.len(tape));
        let mut fed = BOS;
        for (i, &truth) in ex.tokens.iter().enumerate() {
            let out = decode_step(tape, model, &vars, &memory, &state, fed)?;
            let q = smooth_labels(truth, k, opts.smoothing)?;
            let neg: Vec<f64> = q.iter().map(|v| -v).collect();
            terms.push(tape.weighted_sum(out.log_probs, &neg)?);
            let logp = tape.value(out.log_probs).data();
            steps.push(StepDiag {
                utterance: n,
                step: i,
                truth,
                fed,
                truth_prob: libm::exp(logp[truth as usize]),
            });
            fed = truth;
            if opts.sampling_prob > 0.0 && prng.next_f64() < opts.sampling_prob {
                let probs: Vec<f64> = logp.iter().map(|&l| libm::exp(l)).collect();
                fed = prng.categorical(&probs) as TokenId;
            }
            state = out.state;
        }
    }
    let total = tape.add_n(&terms)?;
    let loss = tape.scale(total, 1.0 / terms.len() as f64);
    Ok(CeOutput { loss, steps })
}

/// Teacher-forced `ln P(tokens | x)` against an already encoded utterance.
pub fn sequence_logprob(
    tape: &mut Tape<'_>,
    model: &LasModel,
    vars: &SpellerVars,
    memory: &EncoderMemory,
    tokens: &[TokenId],
) -> Result<Var> {
    check_tokens(tokens, model.config.vocab_size)?;
    let mut state = SpellerState::initial(tape, model, memory.len(tape));
    let mut fed = BOS;
    let mut terms = Vec::with_capacity(tokens.len());
    for &t in tokens {
        let out = decode_step(tape, model, vars, memory, &state, fed)?;
        terms.push(tape.pick(out.log_probs, t as usize)?);
        state = out.state;
        fed = t;
    }
    tape.add_n(&terms)
}
