//! Content and location-aware attention.
//!
//! Energies are `e_j = wᵀ tanh(W s + V h_j + U f_j + b)` where
//! `f = conv1d(history, F)` is `[U, filters]` and `f_j` is its row `j`.
//! Without location awareness the `U f_j` term is dropped.

use super::LasModel;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub query: Var,
    pub key: Var,
    pub location: Var,
    pub bias: Var,
    pub score: Var,
    pub filters: Var,
}

impl AttentionVars {
    pub fn bind(tape: &mut Tape<'_>) -> Result<Self> {
        Ok(AttentionVars {
            query: tape.param("attention.W")?,
            key: tape.param("attention.V")?,
            location: tape.param("attention.U")?,
            bias: tape.param("attention.b")?,
            score: tape.param("attention.w")?,
            filters: tape.param("attention.F")?,
        })
    }
}

/// Encoder states and their step-independent key projection `V h + b`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderMemory {
    pub states: Var,
    pub keys: Var,
}

impl EncoderMemory {
    pub fn new(tape: &mut Tape<'_>, att: &AttentionVars, states: Var) -> Result<Self> {
        let keys = tape.linear(states, att.key, Some(att.bias))?;
        Ok(EncoderMemory { states, keys })
    }

    pub fn len(&self, tape: &Tape<'_>) -> usize {
        tape.value(self.states).rows()
    }
}

/// One attention step. `history` is the length-`U` alignment history;
/// returns the context `[1, 2H]` and the alignment `[1, U]`.
pub fn attend(
    tape: &mut Tape<'_>,
    model: &LasModel,
    att: &AttentionVars,
    query: Var,
    memory: &EncoderMemory,
    history: Var,
) -> Result<(Var, Var)> {
    let u = memory.len(tape);
    if tape.value(history).len() != u {
        return Err(Error::invalid(alloc::format!(
            "alignment history has length {}, encoder has {u} states",
            tape.value(history).len()
        )));
    }
    let q = tape.linear(query, att.query, None)?;
    let mut pre = memory.keys;
    if model.config.location_aware {
        let f = tape.conv1d(history, att.filters)?;
        let loc = tape.linear(f, att.location, None)?;
        pre = tape.add(pre, loc)?;
    }
    let pre = tape.add_row(pre, q)?;
    let act = tape.tanh(pre);
    let energies = tape.linear(act, att.score, None)?;
    let energies = tape.reshape(energies, &[1, u])?;
    let alpha = tape.softmax(energies)?;
    let context = tape.matmul(alpha, memory.states)?;
    Ok((context, alpha))
}
