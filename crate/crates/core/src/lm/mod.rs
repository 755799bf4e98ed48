//! External language models for fusion and rescoring.

mod neural;
mod ngram;

pub use neural::{NeuralLm, NeuralLmConfig, NnlmState};
pub use ngram::{corpus_vocab, train_ngram, NGramEntry, NGramLm, SENT_END, SENT_START, UNKNOWN};
