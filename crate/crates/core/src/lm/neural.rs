use alloc::format;
use alloc::vec::Vec;

use crate::decoder::{SentenceLm, SequenceScorer};
use crate::error::{Error, Result};
use crate::numerics::{fan_in_uniform, lstm_step, register_lstm, uniform, LstmCell, ParamStore, Prng, Tape, Tensor, Var};
use crate::wordpiece::EOS;
use crate::TokenId;

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralLmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for NeuralLmConfig {
    /// Two layers of 1024 units over 500 word pieces.
    fn default() -> Self {
        NeuralLmConfig {
            vocab_size: 500,
            embed_dim: 256,
            hidden: 1024,
            layers: 2,
        }
    }
}

/// LSTM language model over word pieces.
///
/// Parameters: `lm.embed [K, E]`, `lm.layer{l}.{Wx,Wh,b}`,
/// `lm.out.W [K, H]`, `lm.out.b [K]`. Every sentence starts from the zero
/// state with `</s>` fed as the first input.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralLm {
    pub config: NeuralLmConfig,
    pub params: ParamStore,
}

/// Recurrent state of the LM as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct NnlmState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
}

impl NeuralLm {
    pub fn new(config: NeuralLmConfig, prng: &mut Prng) -> Result<Self> {
        if config.vocab_size < 5 || config.embed_dim == 0 || config.hidden == 0 || config.layers == 0 {
            return Err(Error::invalid("neural LM dimensions must be positive"));
        }
        let mut p = ParamStore::new();
        let e = config.embed_dim;
        p.insert("lm.embed", uniform(&[config.vocab_size, e], 1.0 / libm::sqrt(e as f64), prng))?;
        let mut input = e;
        for l in 0..config.layers {
            register_lstm(&mut p, &format!("lm.layer{l}"), input, config.hidden, prng)?;
            input = config.hidden;
        }
        p.insert("lm.out.W", fan_in_uniform(config.vocab_size, config.hidden, prng))?;
        p.insert("lm.out.b", Tensor::zeros(&[config.vocab_size]))?;
        Ok(NeuralLm { config, params: p })
    }

    pub fn from_params(config: NeuralLmConfig, params: ParamStore) -> Result<Self> {
        let reference = NeuralLm::new(config.clone(), &mut Prng::new(0))?;
        if params.len() != reference.params.len() {
            return Err(Error::invalid("neural LM parameter count mismatch"));
        }
        for (name, t) in reference.params.iter() {
            if params.require(name)?.shape() != t.shape() {
                return Err(Error::invalid(format!("parameter {name} has the wrong shape")));
            }
        }
        Ok(NeuralLm { config, params })
    }

    pub fn init_state(&self) -> NnlmState {
        let z = Tensor::zeros(&[1, self.config.hidden]);
        NnlmState { h: alloc::vec![z.clone(); self.config.layers], c: alloc::vec![z; self.config.layers] }
    }

    fn bind(&self, tape: &mut Tape<'_>) -> Result<(Var, Vec<LstmCell>, Var, Var)> {
        let cells = (0..self.config.layers)
            .map(|l| LstmCell::bind(tape, &format!("lm.layer{l}")))
            .collect::<Result<_>>()?;
        Ok((tape.param("lm.embed")?, cells, tape.param("lm.out.W")?, tape.param("lm.out.b")?))
    }

    fn check(&self, token: TokenId) -> Result<()> {
        if token as usize >= self.config.vocab_size {
            return Err(Error::invalid(format!("token {token} outside vocabulary of {}", self.config.vocab_size)));
        }
        Ok(())
    }

    /// Feeds `token` and returns `ln p(· | history)` and the next state.
    pub fn step_state(&self, state: &NnlmState, token: TokenId) -> Result<(Vec<f64>, NnlmState)> {
        self.check(token)?;
        let mut tape = Tape::with_params(&self.params);
        let (embed, cells, w, b) = self.bind(&mut tape)?;
        let mut x = tape.slice_rows(embed, token as usize, 1)?;
        let mut next = NnlmState { h: Vec::new(), c: Vec::new() };
        for (l, cell) in cells.iter().enumerate() {
            let h = tape.constant_ref(&state.h[l]);
            let c = tape.constant_ref(&state.c[l]);
            let (hn, cn) = lstm_step(&mut tape, cell, x, h, c)?;
            next.h.push(tape.value(hn).clone());
            next.c.push(tape.value(cn).clone());
            x = hn;
        }
        let logits = tape.linear(x, w, Some(b))?;
        let lp = tape.log_softmax(logits)?;
        Ok((tape.value(lp).data().to_vec(), next))
    }

    /// Mean next-token cross-entropy over `sentences` (pieces without
    /// `</s>`; each is scored including its closing `</s>`).
    pub fn loss_on(&self, tape: &mut Tape<'_>, sentences: &[&[TokenId]]) -> Result<Var> {
        if sentences.is_empty() {
            return Err(Error::invalid("no sentences"));
        }
        let (embed, cells, w, b) = self.bind(tape)?;
        let zero = tape.constant(Tensor::zeros(&[1, self.config.hidden]));
        let mut terms = Vec::new();
        for s in sentences {
            for &t in s.iter() {
                self.check(t)?;
            }
            let mut h = alloc::vec![zero; cells.len()];
            let mut c = alloc::vec![zero; cells.len()];
            let inputs = core::iter::once(EOS).chain(s.iter().copied());
            let targets = s.iter().copied().chain(core::iter::once(EOS));
            for (inp, tgt) in inputs.zip(targets) {
                let mut x = tape.slice_rows(embed, inp as usize, 1)?;
                for (l, cell) in cells.iter().enumerate() {
                    (h[l], c[l]) = lstm_step(tape, cell, x, h[l], c[l])?;
                    x = h[l];
                }
                let logits = tape.linear(x, w, Some(b))?;
                let lp = tape.log_softmax(logits)?;
                terms.push(tape.pick(lp, tgt as usize)?);
            }
        }
        let total = tape.add_n(&terms)?;
        Ok(tape.scale(total, -1.0 / terms.len() as f64))
    }

    /// `ln P(pieces </s>)` from the start protocol.
    pub fn sentence_logprob(&self, pieces: &[TokenId]) -> Result<f64> {
        let (mut lp, mut st) = self.start()?;
        let mut total = 0.0;
        for &t in pieces {
            self.check(t)?;
            total += lp[t as usize];
            (lp, st) = self.step_state(&st, t)?;
        }
        Ok(total + lp[EOS as usize])
    }

    /// `exp(−mean ln p)` over every piece and closing `</s>`.
    pub fn perplexity(&self, sentences: &[&[TokenId]]) -> Result<f64> {
        if sentences.is_empty() {
            return Err(Error::invalid("no sentences"));
        }
        let mut total = 0.0;
        let mut n = 0;
        for s in sentences {
            total += self.sentence_logprob(s)?;
            n += s.len() + 1;
        }
        Ok(libm::exp(-total / n as f64))
    }
}

impl SequenceScorer for NeuralLm {
    type State = NnlmState;

    fn start(&self) -> Result<(Vec<f64>, NnlmState)> {
        self.step_state(&self.init_state(), EOS)
    }

    fn step(&self, state: &NnlmState, token: TokenId) -> Result<(Vec<f64>, NnlmState)> {
        self.step_state(state, token)
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }
}

impl SentenceLm for NeuralLm {
    fn piece_logprob(&self, tokens: &[TokenId]) -> Result<f64> {
        self.sentence_logprob(tokens)
    }
}
