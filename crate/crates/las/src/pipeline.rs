//! Corpus loading, training loops and batch decoding.

use std::path::{Path, PathBuf};

use las_core::decoder::{beam_search, merge_wordpieces, BeamConfig, Hypothesis};
use las_core::lm::NeuralLm;
use las_core::model::{Example, LasModel, LasScorer};
use las_core::numerics::{Prng, Tape, Tensor};
use las_core::training::{evaluate_ce, evaluate_mwer, wer_counts, Optimizer, OptimizerKind, Trainer, WerReport};
use las_core::wordpiece::{normalize_text, WordPieceVocab, EOS};
use las_core::TokenId;

use crate::config::{Config, LmSettings};
use crate::error::{write_atomic, Error, Result};
use crate::formats::{load_features, save_params, to_jsonl, Dtype, ManifestRecord, NbestRecord, TrainLogRecord};
use crate::frontend::{compute_fbank, read_audio, FbankConfig};

/// One loaded utterance. `tokens` ends with `</s>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: Tensor,
    pub text: String,
    pub tokens: Vec<TokenId>,
}

impl Utterance {
    pub fn example(&self) -> Example<'_> {
        Example { features: &self.features, tokens: &self.tokens }
    }

    pub fn words(&self) -> Vec<String> {
        self.text.split_whitespace().map(str::to_string).collect()
    }
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn encode_transcript(vocab: &WordPieceVocab, text: &str) -> Vec<TokenId> {
    let mut tokens = vocab.encode(&normalize_text(text));
    tokens.push(EOS);
    tokens
}

pub fn features_for(record: &ManifestRecord, frontend: &FbankConfig) -> Result<Tensor> {
    match (&record.audio, &record.feats) {
        (Some(a), None) => Ok(compute_fbank(&read_audio(a)?, frontend)?.frames),
        (None, Some(f)) => Ok(load_features(f)?.frames),
        _ => Err(Error::invalid(format!("{}: exactly one of audio and feats is required", record.id))),
    }
}

/// Loads features and word pieces for every record, checking the feature
/// width against `feature_dim`.
pub fn load_corpus(
    records: &[ManifestRecord],
    vocab: &WordPieceVocab,
    frontend: &FbankConfig,
    feature_dim: usize,
    jobs: usize,
) -> Result<Vec<Utterance>> {
    par_map(records, jobs, |r| {
        let features = features_for(r, frontend)?;
        if features.cols() != feature_dim {
            return Err(Error::invalid(format!(
                "{}: features have {} dims, model expects {feature_dim}",
                r.id,
                features.cols()
            )));
        }
        let text = normalize_text(&r.text);
        Ok(Utterance { id: r.id.clone(), tokens: encode_transcript(vocab, &text), features, text })
    })
}

fn examples(data: &[Utterance]) -> Vec<Example<'_>> {
    data.iter().map(Utterance::example).collect()
}

/// Where [`fit`] and [`fit_mwer`] leave their files.
#[derive(Clone, Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub dtype: Dtype,
}

impl OutputDir {
    pub fn new(dir: &Path, dtype: Dtype) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), dtype })
    }

    fn checkpoint(&self, name: &str, model: &LasModel) -> Result<()> {
        save_params(&self.dir.join(name), &model.params, self.dtype)
    }

    fn log(&self, name: &str, log: &[TrainLogRecord]) -> Result<()> {
        write_atomic(&self.dir.join(name), to_jsonl(log).as_bytes())
    }
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

/// Cross-entropy epochs with validation, new-bob decay, a checkpoint per
/// epoch (`ce_epochNNN.lasf`, then `final.lasf`) and `train_log.jsonl`.
/// Without validation data the training loss drives new-bob.
pub fn fit(
    model: &mut LasModel,
    trainer: &mut Trainer,
    train: &[Utterance],
    val: &[Utterance],
    out: Option<&OutputDir>,
) -> Result<Vec<TrainLogRecord>> {
    if train.is_empty() {
        return Err(Error::invalid("no training utterances"));
    }
    let val = if val.is_empty() { train } else { val };
    let mut log = Vec::new();
    for epoch in 1..=trainer.config.epochs {
        let order = trainer.epoch_order(train.len());
        let (mut total, mut n, mut clips) = (0.0, 0usize, 0usize);
        let (mut lr, mut p) = (trainer.lr(), trainer.sampling_prob());
        for idx in batches(&order, trainer.config.batch_size) {
            let batch: Vec<Example<'_>> = idx.iter().map(|&i| train[i].example()).collect();
            let r = trainer.ce_batch(model, &batch)?;
            total += r.loss;
            n += 1;
            clips += usize::from(r.clip.tracker_clipped || r.clip.static_clipped);
            (lr, p) = (r.lr, r.sampling_prob);
        }
        let val_loss = evaluate_ce(model, &examples(val), trainer.config.smoothing)?;
        trainer.end_epoch(val_loss)?;
        log.push(TrainLogRecord {
            epoch,
            lr,
            train_loss: total / n as f64,
            val_loss,
            sampling_prob: p,
            grad_clip_events: clips,
        });
        if let Some(o) = out {
            o.checkpoint(&format!("ce_epoch{epoch:03}.lasf"), model)?;
            o.log("train_log.jsonl", &log)?;
        }
    }
    if let Some(o) = out {
        o.checkpoint("final.lasf", model)?;
    }
    Ok(log)
}

/// MWER fine-tuning for `trainer.config.mwer_epochs` epochs at the fixed
/// MWER rate. Logged `train_loss` is the mean MWER objective and
/// `val_loss` the expected-error term on the validation set. Writes
/// `mwer_epochNNN.lasf`, `mwer_final.lasf` and `mwer_log.jsonl`.
pub fn fit_mwer(
    model: &mut LasModel,
    trainer: &mut Trainer,
    vocab: &WordPieceVocab,
    train: &[Utterance],
    val: &[Utterance],
    out: Option<&OutputDir>,
) -> Result<Vec<TrainLogRecord>> {
    if train.is_empty() {
        return Err(Error::invalid("no training utterances"));
    }
    let val = if val.is_empty() { train } else { val };
    let mut log = Vec::new();
    for epoch in 1..=trainer.config.mwer_epochs {
        let order = trainer.epoch_order(train.len());
        let (mut total, mut n, mut clips) = (0.0, 0usize, 0usize);
        for idx in batches(&order, trainer.config.batch_size) {
            let batch: Vec<Example<'_>> = idx.iter().map(|&i| train[i].example()).collect();
            let r = trainer.mwer_batch(model, vocab, &batch)?;
            total += r.loss;
            n += 1;
            clips += usize::from(r.clip.tracker_clipped || r.clip.static_clipped);
        }
        let val_loss = evaluate_mwer(model, vocab, &examples(val), &trainer.config.mwer)?;
        log.push(TrainLogRecord {
            epoch,
            lr: trainer.config.mwer_lr,
            train_loss: total / n as f64,
            val_loss,
            sampling_prob: 0.0,
            grad_clip_events: clips,
        });
        if let Some(o) = out {
            o.checkpoint(&format!("mwer_epoch{epoch:03}.lasf"), model)?;
            o.log("mwer_log.jsonl", &log)?;
        }
    }
    if let Some(o) = out {
        o.checkpoint("mwer_final.lasf", model)?;
    }
    Ok(log)
}

/// Builds a model sized by `config` and the vocabulary, seeded from the
/// training seed.
pub fn init_model(config: &Config, vocab: &WordPieceVocab) -> Result<LasModel> {
    let mut cfg = config.model.clone();
    cfg.vocab_size = vocab.len();
    Ok(LasModel::new(cfg, &mut Prng::new(config.train.seed))?)
}

/// Top-1 words of the first `nbest` entry per utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub nbest: Vec<NbestRecord>,
    pub hypotheses: Vec<(String, String)>,
    pub report: Option<WerReport>,
}

pub fn nbest_records(id: &str, hyps: &[Hypothesis], vocab: &WordPieceVocab) -> Vec<NbestRecord> {
    hyps.iter()
        .enumerate()
        .map(|(rank, h)| NbestRecord {
            id: id.to_string(),
            rank,
            text: merge_wordpieces(&h.tokens, vocab).join(" "),
            tokens: h.tokens.clone(),
            las_logp: h.las_logp,
            lm_logp: h.lm_logp,
            score: h.score,
        })
        .collect()
}

/// Beam search over every utterance, optionally fused with `lm`. WER is
/// reported when the references hold at least one word.
pub fn decode_corpus(
    model: &LasModel,
    vocab: &WordPieceVocab,
    data: &[Utterance],
    cfg: &BeamConfig,
    lm: Option<&NeuralLm>,
    jobs: usize,
) -> Result<DecodeOutput> {
    cfg.validate()?;
    let lists = par_map(data, jobs, |u| {
        let scorer = LasScorer::new(model, &u.features)?;
        let steps = cfg.steps_for(scorer.encoder_len());
        Ok(beam_search(&scorer, lm, cfg, steps)?)
    })?;
    let mut nbest = Vec::new();
    let mut hypotheses = Vec::new();
    let mut hyp_words = Vec::new();
    for (u, hyps) in data.iter().zip(&lists) {
        let words = hyps.first().map(|h| merge_wordpieces(&h.tokens, vocab)).unwrap_or_default();
        hypotheses.push((u.id.clone(), words.join(" ")));
        hyp_words.push(words);
        nbest.extend(nbest_records(&u.id, hyps, vocab));
    }
    let refs: Vec<Vec<String>> = data.iter().map(Utterance::words).collect();
    let report = wer_counts(&refs, &hyp_words).ok().filter(|r| r.ref_words > 0);
    Ok(DecodeOutput { nbest, hypotheses, report })
}

/// Adam (or SGD) training of the word-piece LM on token sequences without
/// `</s>`. Returns the mean loss per epoch.
pub fn train_nnlm(lm: &mut NeuralLm, sentences: &[Vec<TokenId>], settings: &LmSettings, seed: u64) -> Result<Vec<f64>> {
    if sentences.is_empty() {
        return Err(Error::invalid("no LM training sentences"));
    }
    let mut prng = Prng::new(seed);
    let mut opt = Optimizer::new(OptimizerKind::Adam, &lm.params);
    let mut losses = Vec::new();
    for _ in 0..settings.nnlm_epochs {
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        prng.shuffle(&mut order);
        let (mut total, mut n) = (0.0, 0usize);
        for idx in order.chunks(settings.nnlm_batch_size) {
            let batch: Vec<&[TokenId]> = idx.iter().map(|&i| sentences[i].as_slice()).collect();
            let (loss, grads) = {
                let mut tape = Tape::with_params(&lm.params);
                let loss = lm.loss_on(&mut tape, &batch)?;
                (tape.scalar(loss), tape.backward(loss)?.into_params())
            };
            if !loss.is_finite() {
                return Err(Error::invalid(format!("LM training diverged: loss {loss}")));
            }
            opt.step(&mut lm.params, &grads, settings.nnlm_lr)?;
            total += loss;
            n += 1;
        }
        losses.push(total / n as f64);
    }
    Ok(losses)
}
