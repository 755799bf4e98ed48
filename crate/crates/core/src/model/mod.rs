//! The listen-attend-spell network.
//!
//! Parameter names are canonical and appear verbatim in checkpoints:
//!
//! | name | shape |
//! |------|-------|
//! | `listener.layer{l}.{fwd,bwd}.{Wx,Wh,b}` | `[4H, in]`, `[4H, H]`, `[4H]` |
//! | `attention.W` | `[A, S]` query projection |
//! | `attention.V` | `[A, 2H]` key projection |
//! | `attention.U` | `[A, filters]` location projection |
//! | `attention.b` | `[A]` |
//! | `attention.w` | `[1, A]` score vector |
//! | `attention.F` | `[filters, width]` alignment-history filters |
//! | `speller.embed` | `[K, E]` |
//! | `speller.layer{l}.{Wx,Wh,b}` | LSTM, input `E + 2H` for layer 0 |
//! | `speller.out.W`, `speller.out.b` | `[K, S + 2H]`, `[K]` |
//!
//! `H` is the listener width per direction, `S` the speller width, `A` the
//! attention width and `K` the vocabulary size.

mod attention;
mod ce;
mod listener;
mod scorer;
mod speller;

use alloc::format;

pub use attention::{attend, AttentionVars, EncoderMemory};
pub use ce::{forward_ce, sequence_logprob, smooth_labels, CeOptions, CeOutput, Example, StepDiag};
pub use listener::{listen, listen_on, listener_length};
pub use scorer::{LasScorer, LasState};
pub use speller::{decode_step, SpellerState, SpellerVars, StepOutput};

use crate::error::{Error, Result};
use crate::numerics::{fan_in_uniform, register_lstm, uniform, ParamStore, Prng, Tensor};

/// Which alignment history feeds the location filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignmentHistory {
    /// The previous step's alignment `α_{i-1}`.
    Previous,
    /// The running sum `Σ_{k<i} α_k`.
    Accumulated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LasConfig {
    pub feature_dim: usize,
    pub listener_layers: usize,
    /// Hidden units per direction.
    pub listener_hidden: usize,
    pub speller_layers: usize,
    pub speller_hidden: usize,
    pub embed_dim: usize,
    pub attention_dim: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub location_aware: bool,
    pub history: AlignmentHistory,
    pub vocab_size: usize,
}

impl Default for LasConfig {
    /// 40-dim features, 3 × 1024 pyramid BLSTM, 2 × 512 speller, 20 filters
    /// of width 100, 500 word pieces.
    fn default() -> Self {
        LasConfig {
            feature_dim: 40,
            listener_layers: 3,
            listener_hidden: 1024,
            speller_layers: 2,
            speller_hidden: 512,
            embed_dim: 512,
            attention_dim: 512,
            conv_filters: 20,
            conv_width: 100,
            location_aware: true,
            history: AlignmentHistory::Accumulated,
            vocab_size: 500,
        }
    }
}

impl LasConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("listener_layers", self.listener_layers),
            ("listener_hidden", self.listener_hidden),
            ("speller_layers", self.speller_layers),
            ("speller_hidden", self.speller_hidden),
            ("embed_dim", self.embed_dim),
            ("attention_dim", self.attention_dim),
            ("conv_filters", self.conv_filters),
            ("conv_width", self.conv_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 5 {
            return Err(Error::invalid("vocabulary needs the four specials plus one piece"));
        }
        Ok(())
    }

    /// Width of one encoder state (both directions).
    pub fn encoder_dim(&self) -> usize {
        2 * self.listener_hidden
    }
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LasModel {
    pub config: LasConfig,
    pub params: ParamStore,
}

impl LasModel {
    pub fn new(config: LasConfig, prng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let c = &config;
        let h = c.listener_hidden;
        let mut input = 2 * c.feature_dim;
        for l in 0..c.listener_layers {
            register_lstm(&mut p, &format!("listener.layer{l}.fwd"), input, h, prng)?;
            register_lstm(&mut p, &format!("listener.layer{l}.bwd"), input, h, prng)?;
            input = 2 * 2 * h;
        }
        let enc = c.encoder_dim();
        let a = c.attention_dim;
        p.insert("attention.W", fan_in_uniform(a, c.speller_hidden, prng))?;
        p.insert("attention.V", fan_in_uniform(a, enc, prng))?;
        p.insert("attention.U", fan_in_uniform(a, c.conv_filters, prng))?;
        p.insert("attention.b", Tensor::zeros(&[a]))?;
        p.insert("attention.w", fan_in_uniform(1, a, prng))?;
        p.insert("attention.F", fan_in_uniform(c.conv_filters, c.conv_width, prng))?;
        p.insert(
            "speller.embed",
            uniform(&[c.vocab_size, c.embed_dim], 1.0 / libm::sqrt(c.embed_dim as f64), prng),
        )?;
        let mut input = c.embed_dim + enc;
        for l in 0..c.speller_layers {
            register_lstm(&mut p, &format!("speller.layer{l}"), input, c.speller_hidden, prng)?;
            input = c.speller_hidden;
        }
        p.insert("speller.out.W", fan_in_uniform(c.vocab_size, c.speller_hidden + enc, prng))?;
        p.insert("speller.out.b", Tensor::zeros(&[c.vocab_size]))?;
        Ok(LasModel { config, params: p })
    }

    /// Wraps parameters loaded from elsewhere after checking every expected
    /// name is present with the right shape.
    pub fn from_params(config: LasConfig, params: ParamStore) -> Result<Self> {
        let reference = LasModel::new(config.clone(), &mut Prng::new(0))?;
        for (name, t) in reference.params.iter() {
            let got = params.require(name)?;
            if got.shape() != t.shape() {
                return Err(Error::invalid(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::invalid("unexpected extra parameters"));
        }
        Ok(LasModel { config, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_encoder_width() {
        assert_eq!(LasConfig::default().encoder_dim(), 2 * 1024);
    }

    #[test]
    fn from_params_checks_shapes() {
        let cfg = LasConfig {
            feature_dim: 3,
            listener_layers: 1,
            listener_hidden: 2,
            speller_layers: 1,
            speller_hidden: 2,
            embed_dim: 2,
            attention_dim: 2,
            conv_filters: 1,
            conv_width: 3,
            vocab_size: 6,
            ..LasConfig::default()
        };
        let m = LasModel::new(cfg.clone(), &mut Prng::new(5)).unwrap();
        assert!(LasModel::from_params(cfg.clone(), m.params.clone()).is_ok());
        let wider = LasConfig {
            vocab_size: 7,
            ..cfg
        };
        assert!(LasModel::from_params(wider, m.params).is_err());
    }
}
