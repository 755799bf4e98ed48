use alloc::format;
use alloc::vec::Vec;

use super::attention::{attend, AttentionVars, EncoderMemory};
use super::{AlignmentHistory, LasModel};
use crate::error::{Error, Result};
use crate::numerics::{LstmCell, Tape, Tensor, Var};
use crate::TokenId;

/// Speller parameters bound to a tape.
#[derive(Clone, Debug)]
pub struct SpellerVars {
    pub attention: AttentionVars,
    pub embed: Var,
    pub cells: Vec<LstmCell>,
    pub out_w: Var,
    pub out_b: Var,
}

impl SpellerVars {
    pub fn bind(tape: &mut Tape<'_>, model: &LasModel) -> Result<Self> {
        let attention = AttentionVars::bind(tape)?;
        let cells = (0..model.config.speller_layers)
            .map(|l| LstmCell::bind(tape, &format!("speller.layer{l}")))
            .collect::<Result<_>>()?;
        Ok(SpellerVars {
            attention,
            embed: tape.param("speller.embed")?,
            cells,
            out_w: tape.param("speller.out.W")?,
            out_b: tape.param("speller.out.b")?,
        })
    }
}

/// Decoder state on a tape: per-layer LSTM state plus alignment history.
#[derive(Clone, Debug)]
pub struct SpellerState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    /// `α_{i-1}`; uniform before the first step.
    pub prev_alignment: Var,
    /// `Σ_{k<i} α_k`; zero before the first step.
    pub accumulated: Var,
}

impl SpellerState {
    /// Zero LSTM state, uniform previous alignment, zero accumulated alignment.
    pub fn initial(tape: &mut Tape<'_>, model: &LasModel, encoder_len: usize) -> Self {
        let n = model.config.speller_hidden;
        let layers = model.config.speller_layers;
        let zero = tape.constant(Tensor::zeros(&[1, n]));
        let uniform = tape.constant(Tensor::full(&[1, encoder_len], 1.0 / encoder_len as f64));
        let acc = tape.constant(Tensor::zeros(&[1, encoder_len]));
        SpellerState {
            h: alloc::vec![zero; layers],
            c: alloc::vec![zero; layers],
            prev_alignment: uniform,
            accumulated: acc,
        }
    }

    /// Query for the next attention step: the top layer's hidden state.
    pub fn query(&self) -> Var {
        *self.h.last().expect("speller has at least one layer")
    }
}

/// Output of one decoder step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// Natural-log distribution over the vocabulary, `[1, K]`.
    pub log_probs: Var,
    pub alignment: Var,
    pub state: SpellerState,
}

/// Attends with the previous top-layer state, embeds `prev_token`,
/// concatenates it with the context, runs the LSTM stack and projects
/// `[s_i; c_i]` to the vocabulary.
pub fn decode_step(
    tape: &mut Tape<'_>,
    model: &LasModel,
    vars: &SpellerVars,
    memory: &EncoderMemory,
    state: &SpellerState,
    prev_token: TokenId,
) -> Result<StepOutput> {
    let k = model.config.vocab_size;
    if prev_token as usize >= k {
        return Err(Error::invalid(format!("token {prev_token} outside vocabulary of {k}")));
    }
    let history = match model.config.history {
        AlignmentHistory::Previous => state.prev_alignment,
        AlignmentHistory::Accumulated => state.accumulated,
    };
    let (context, alignment) =
        attend(tape, model, &vars.attention, state.query(), memory, history)?;

    let emb = tape.slice_rows(vars.embed, prev_token as usize, 1)?;
    let mut input = tape.concat_cols(&[emb, context])?;
    let mut h = Vec::with_capacity(vars.cells.len());
    let mut c = Vec::with_capacity(vars.cells.len());
    for (l, cell) in vars.cells.iter().enumerate() {
        let (hn, cn) = crate::numerics::lstm_step(tape, cell, input, state.h[l], state.c[l])?;
        h.push(hn);
        c.push(cn);
        input = hn;
    }
    let features = tape.concat_cols(&[input, context])?;
    let logits = tape.linear(features, vars.out_w, Some(vars.out_b))?;
    let log_probs = tape.log_softmax(logits)?;
    let accumulated = tape.add(state.accumulated, alignment)?;
    Ok(StepOutput {
        log_probs,
        alignment,
        state: SpellerState {
            h,
            c,
            prev_alignment: alignment,
            accumulated,
        },
    })
}
