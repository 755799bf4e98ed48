//! Attention-based sequence-to-sequence speech recognition.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithmic
//! piece of the recognizer:
//!
//! - [`numerics`]: dense tensors, a reverse-mode tape, LSTM cells, 1-D
//!   convolution and the seeded PRNG everything else computes on.
//! - [`wordpiece`]: byte-pair-encoded word pieces.
//! - [`model`]: the pyramid-BLSTM listener, location-aware attention and
//!   the LSTM speller, plus the label-smoothed cross-entropy objective.
//! - [`training`]: learning-rate schedules, gradient-norm tracking, MWER
//!   fine-tuning, edit distance and WER.
//! - [`lm`]: backoff n-gram and LSTM word-piece language models.
//! - [`decoder`]: beam search with shallow fusion and n-best rescoring.
//!
//! File formats, audio front end and the command line live in the `las`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod decoder;
pub mod error;
pub mod lm;
pub mod model;
pub mod numerics;
pub mod training;
pub mod wordpiece;

pub use error::{Error, Result};

/// Index into a vocabulary.
pub type TokenId = u32;
