#![allow(dead_code)]

use las::pipeline::Utterance;
use las_core::model::{LasConfig, LasModel};
use las_core::numerics::{Prng, Tensor};
use las_core::training::{OptimizerKind, SamplingSchedule, TrainConfig, Warmup};
use las_core::wordpiece::{learn_bpe, WordPieceVocab, EOS};

pub const TOY_TEXTS: [&str; 10] = [
    "ab cd",
    "bad dab",
    "cab ab cd",
    "dab",
    "cd bad ab",
    "ab ab dab",
    "cab cd",
    "bad cab dab",
    "cd",
    "dab bad cd ab",
];

pub const FRAMES_PER_TOKEN: usize = 8;
pub const FEATURE_DIM: usize = 40;

pub fn toy_vocab() -> WordPieceVocab {
    learn_bpe(TOY_TEXTS.iter().copied(), 20).unwrap()
}

/// Every word piece is rendered as a fixed random 8-frame pattern plus
/// seeded Gaussian noise.
pub fn toy_corpus(vocab: &WordPieceVocab) -> Vec<Utterance> {
    let mut p = Prng::new(7);
    let patterns: Vec<Vec<f64>> =
        (0..vocab.len()).map(|_| (0..FRAMES_PER_TOKEN * FEATURE_DIM).map(|_| p.normal()).collect()).collect();
    TOY_TEXTS
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let mut tokens = vocab.encode(text);
            let mut data = Vec::new();
            for &t in &tokens {
                data.extend(patterns[t as usize].iter().map(|v| v + 0.1 * p.normal()));
            }
            tokens.push(EOS);
            let frames = data.len() / FEATURE_DIM;
            Utterance {
                id: format!("toy{i:02}"),
                features: Tensor::matrix(frames, FEATURE_DIM, data).unwrap(),
                text: text.to_string(),
                tokens,
            }
        })
        .collect()
}

pub fn toy_model_config(vocab: &WordPieceVocab) -> LasConfig {
    LasConfig {
        feature_dim: FEATURE_DIM,
        listener_layers: 2,
        listener_hidden: 32,
        speller_layers: 1,
        speller_hidden: 32,
        embed_dim: 32,
        attention_dim: 32,
        conv_filters: 4,
        conv_width: 5,
        vocab_size: vocab.len(),
        ..LasConfig::default()
    }
}

pub fn toy_model(vocab: &WordPieceVocab) -> LasModel {
    LasModel::new(toy_model_config(vocab), &mut Prng::new(1)).unwrap()
}

pub fn toy_train_config(epochs: usize, mwer_epochs: usize) -> TrainConfig {
    TrainConfig {
        warmup: Warmup { lr_start: 0.05, lr_end: 0.5, steps: 20 },
        batch_size: 2,
        epochs,
        optimizer: OptimizerKind::Sgd,
        sampling: SamplingSchedule::Constant(0.0),
        mwer_epochs,
        mwer_lr: 0.05,
        ..TrainConfig::default()
    }
}

/// `key = value` text equivalent of the toy model and training setup.
pub fn toy_config_text(epochs: usize) -> String {
    format!(
        "feature_dim = 40\nlistener_layers = 2\nlistener_hidden = 32\nspeller_layers = 1\nspeller_hidden = 32\n\
         embed_dim = 32\nattention_dim = 32\nconv_filters = 4\nconv_width = 5\nwordpieces = 20\n\
         lr_start = 0.05\nlr_end = 0.5\nwarmup_steps = 20\nbatch_size = 2\nepochs = {epochs}\n\
         sampling_strategy = constant\nsampling_prob = 0\nmwer_lr = 0.05\nseed = 1\nbeam = 4\nnbest = 4\n"
    )
}

/// Greedy word error rate over `data`, in percent.
pub fn greedy_wer(model: &LasModel, vocab: &WordPieceVocab, data: &[Utterance]) -> f64 {
    use las_core::decoder::{greedy, merge_wordpieces, BeamConfig, NoLm};
    use las_core::model::LasScorer;
    let cfg = BeamConfig::default();
    let mut refs = Vec::new();
    let mut hyps = Vec::new();
    for u in data {
        let s = LasScorer::new(model, &u.features).unwrap();
        let h = greedy(&s, None::<&NoLm>, &cfg, cfg.steps_for(s.encoder_len())).unwrap();
        refs.push(u.words());
        hyps.push(merge_wordpieces(&h.tokens, vocab));
    }
    las_core::training::wer(&refs, &hyps).unwrap()
}

/// Writes the toy corpus as FBNK files plus `manifest.jsonl`, the vocabulary
/// as `vocab.wpv` and the toy configuration as `toy.cfg`.
pub fn write_toy_workspace(dir: &std::path::Path, epochs: usize, mwer_epochs: usize) {
    use las::formats::{save_features, save_jsonl, save_vocab, ManifestRecord};
    use las::frontend::FeatureSequence;
    let vocab = toy_vocab();
    let mut records = Vec::new();
    for u in toy_corpus(&vocab) {
        let name = format!("{}.fbnk", u.id);
        let seq = FeatureSequence { id: u.id.clone(), frames: u.features.clone(), frame_shift: 0.01 };
        save_features(&dir.join(&name), &seq).unwrap();
        records.push(ManifestRecord { id: u.id, audio: None, feats: Some(name.into()), text: u.text });
    }
    save_jsonl(&dir.join("manifest.jsonl"), &records).unwrap();
    save_vocab(&dir.join("vocab.wpv"), &vocab).unwrap();
    let cfg = format!("{}mwer_epochs = {mwer_epochs}\n", toy_config_text(epochs));
    std::fs::write(dir.join("toy.cfg"), cfg).unwrap();
}
