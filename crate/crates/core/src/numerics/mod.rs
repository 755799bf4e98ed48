//! Dense tensors, reverse-mode differentiation and the primitives the
//! recognizer is built from.

pub mod check;
mod lstm;
pub mod ops;
mod params;
mod prng;
mod tape;
mod tensor;

pub use lstm::{lstm_step, register_lstm, LstmCell};
pub use ops::{conv1d, log_softmax, sigmoid, softmax};
pub use params::{fan_in_uniform, uniform, ParamStore};
pub use prng::Prng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
