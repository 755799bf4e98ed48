use alloc::vec::Vec;

use super::attention::{AttentionVars, EncoderMemory};
use super::listener::listen;
use super::speller::{decode_step, SpellerState, SpellerVars};
use super::LasModel;
use crate::decoder::SequenceScorer;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};
use crate::wordpiece::BOS;
use crate::TokenId;

/// Decoder state as plain tensors, detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct LasState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
    pub prev_alignment: Tensor,
    pub accumulated: Tensor,
}

/// Inference-time view of a model over one utterance. The encoder and key
/// projection are computed once; each step replays only the speller.
pub struct LasScorer<'m> {
    model: &'m LasModel,
    states: Tensor,
    keys: Tensor,
}

impl<'m> LasScorer<'m> {
    pub fn new(model: &'m LasModel, features: &Tensor) -> Result<Self> {
        let states = listen(model, features)?;
        let mut tape = Tape::with_params(&model.params);
        let att = AttentionVars::bind(&mut tape)?;
        let h = tape.constant_ref(&states);
        let mem = EncoderMemory::new(&mut tape, &att, h)?;
        let keys = tape.value(mem.keys).clone();
        drop(tape);
        Ok(LasScorer { model, states, keys })
    }

    /// Encoder length `U`.
    pub fn encoder_len(&self) -> usize {
        self.states.rows()
    }

    pub fn encoder_states(&self) -> &Tensor {
        &self.states
    }

    fn initial_state(&self) -> LasState {
        let n = self.model.config.speller_hidden;
        let u = self.encoder_len();
        let layers = self.model.config.speller_layers;
        LasState {
            h: alloc::vec![Tensor::zeros(&[1, n]); layers],
            c: alloc::vec![Tensor::zeros(&[1, n]); layers],
            prev_alignment: Tensor::full(&[1, u], 1.0 / u as f64),
            accumulated: Tensor::zeros(&[1, u]),
        }
    }

    /// Runs one step; the alignment is returned alongside the distribution.
    pub fn step_with_alignment(&self, state: &LasState, token: TokenId) -> Result<(Vec<f64>, LasState, Tensor)> {
        let mut tape = Tape::with_params(&self.model.params);
        let vars = SpellerVars::bind(&mut tape, self.model)?;
        let states = tape.constant_ref(&self.states);
        let keys = tape.constant_ref(&self.keys);
        let memory = EncoderMemory { states, keys };
        let sp = SpellerState {
            h: state.h.iter().map(|t| tape.constant_ref(t)).collect(),
            c: state.c.iter().map(|t| tape.constant_ref(t)).collect(),
            prev_alignment: tape.constant_ref(&state.prev_alignment),
            accumulated: tape.constant_ref(&state.accumulated),
        };
        let out = decode_step(&mut tape, self.model, &vars, &memory, &sp, token)?;
        let next = LasState {
            h: out.state.h.iter().map(|&v| tape.value(v).clone()).collect(),
            c: out.state.c.iter().map(|&v| tape.value(v).clone()).collect(),
            prev_alignment: tape.value(out.state.prev_alignment).clone(),
            accumulated: tape.value(out.state.accumulated).clone(),
        };
        let logp = tape.value(out.log_probs).data().to_vec();
        if logp.iter().any(|v| v.is_nan()) {
            return Err(Error::numeric("recognizer produced NaN log-probabilities"));
        }
        Ok((logp, next, tape.value(out.alignment).clone()))
    }
}

impl SequenceScorer for LasScorer<'_> {
    type State = LasState;

    /// Feeds `<s>` from the zero state.
    fn start(&self) -> Result<(Vec<f64>, LasState)> {
        self.step(&self.initial_state(), BOS)
    }

    fn step(&self, state: &LasState, token: TokenId) -> Result<(Vec<f64>, LasState)> {
        let (p, s, _) = self.step_with_alignment(state, token)?;
        Ok((p, s))
    }

    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }
}
