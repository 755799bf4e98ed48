//! Standard LSTM cell (no peepholes, no projection).
//!
//! Gate blocks are laid out `[input, forget, candidate, output]` along the
//! `4H` axis of `Wx: [4H, in]`, `Wh: [4H, H]` and `b: [4H]`.

use alloc::format;

use super::{ParamStore, Prng, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Registers `{prefix}.Wx`, `{prefix}.Wh`, `{prefix}.b`.
///
/// Weights are uniform in `[-k, k]` with `k = 1/sqrt(H)`; the forget-gate
/// bias starts at 1 and all other biases at 0.
pub fn register_lstm(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    prng: &mut Prng,
) -> Result<()> {
    let k = 1.0 / libm::sqrt(hidden as f64);
    store.insert(&format!("{prefix}.Wx"), super::uniform(&[4 * hidden, input], k, prng))?;
    store.insert(&format!("{prefix}.Wh"), super::uniform(&[4 * hidden, hidden], k, prng))?;
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
    store.insert(&format!("{prefix}.b"), b)?;
    Ok(())
}

/// Tape handles for one cell's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmCell {
    pub fn bind(tape: &mut Tape<'_>, prefix: &str) -> Result<Self> {
        let wx = tape.param(&format!("{prefix}.Wx"))?;
        let wh = tape.param(&format!("{prefix}.Wh"))?;
        let b = tape.param(&format!("{prefix}.b"))?;
        let hidden = tape.value(wh).cols();
        if tape.value(wh).rows() != 4 * hidden || tape.value(b).len() != 4 * hidden {
            return Err(Error::invalid(format!("{prefix}: inconsistent LSTM shapes")));
        }
        Ok(LstmCell { wx, wh, b, hidden })
    }

    /// `x · Wxᵀ + b` for every row of `x`, so a whole sequence can be
    /// projected at once before the recurrence.
    pub fn project_input(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        tape.linear(x, self.wx, Some(self.b))
    }

    /// One step given the already projected input row.
    pub fn step_projected(
        &self,
        tape: &mut Tape<'_>,
        x_proj: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let n = self.hidden;
        if tape.value(h).len() != n || tape.value(c).len() != n {
            return Err(Error::invalid(format!("LSTM state must have {n} units")));
        }
        let rec = tape.linear(h, self.wh, None)?;
        let gates = tape.add(x_proj, rec)?;
        let i = tape.slice_cols(gates, 0, n)?;
        let f = tape.slice_cols(gates, n, n)?;
        let g = tape.slice_cols(gates, 2 * n, n)?;
        let o = tape.slice_cols(gates, 3 * n, n)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

/// `h' = o ⊙ tanh(c')`, `c' = f ⊙ c + i ⊙ g`.
pub fn lstm_step(
    tape: &mut Tape<'_>,
    cell: &LstmCell,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let w_in = tape.value(cell.wx).cols();
    if tape.value(x).cols() != w_in || tape.value(x).rows() != 1 {
        return Err(Error::invalid(format!("LSTM input must be a row of width {w_in}")));
    }
    let xp = cell.project_input(tape, x)?;
    cell.step_projected(tape, xp, h, c)
}
