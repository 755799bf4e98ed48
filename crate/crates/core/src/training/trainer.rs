use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::clip::{ClipReport, GradNormTracker};
use super::metrics::edit_distance;
use super::mwer::{mwer_loss, mwer_loss_on, MwerConfig};
use super::optim::{Optimizer, OptimizerKind};
use super::schedule::{warmup_lr, NewBob, SamplingSchedule, Warmup};
use crate::decoder::{beam_search, merge_wordpieces, BeamConfig, Hypothesis, NoLm};
use crate::error::{Error, Result};
use crate::model::{forward_ce, listen_on, sequence_logprob, CeOptions, EncoderMemory, Example, LasModel, LasScorer, SpellerVars};
use crate::numerics::{Prng, Tape, Tensor};
use crate::wordpiece::{WordPieceVocab, EOS};

/// Everything the optimization loop needs besides data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub warmup: Warmup,
    pub newbob_decay: f64,
    pub newbob_threshold: f64,
    pub smoothing: f64,
    pub sampling: SamplingSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub tracker_decay: f64,
    pub tracker_std_factor: f64,
    pub static_cap: f64,
    pub mwer: MwerConfig,
    pub mwer_epochs: usize,
    /// Fixed learning rate of the MWER stage.
    pub mwer_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            warmup: Warmup::default(),
            newbob_decay: 0.9,
            newbob_threshold: 1e-3,
            smoothing: 0.01,
            sampling: SamplingSchedule::default(),
            batch_size: 8,
            epochs: 10,
            optimizer: OptimizerKind::Sgd,
            tracker_decay: 0.95,
            tracker_std_factor: 2.0,
            static_cap: 5.0,
            mwer: MwerConfig::default(),
            mwer_epochs: 0,
            mwer_lr: 0.0002,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.mwer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::invalid("label smoothing must lie in [0, 1)"));
        }
        let rates = [self.warmup.lr_start, self.warmup.lr_end, self.mwer_lr];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.newbob_decay > 0.0 && self.newbob_decay <= 1.0) {
            return Err(Error::invalid("newbob_decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Outcome of one parameter update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchReport {
    pub loss: f64,
    pub lr: f64,
    pub sampling_prob: f64,
    pub clip: ClipReport,
    /// Mean normalized expected word errors (MWER updates only).
    pub expected_error: Option<f64>,
}

/// Optimizer, schedules and stabilization state for one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub step: usize,
    pub tracker: GradNormTracker,
    pub newbob: NewBob,
    /// Set once validation loss first stalls; drives the plateau-step
    /// sampling schedule.
    pub plateau: bool,
    pub optimizer: Optimizer,
    pub prng: Prng,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &LasModel) -> Result<Self> {
        config.validate()?;
        let tracker = GradNormTracker {
            decay: config.tracker_decay,
            std_factor: config.tracker_std_factor,
            static_cap: config.static_cap,
            ..GradNormTracker::default()
        };
        let newbob = NewBob::new(config.warmup.lr_end, config.newbob_decay, config.newbob_threshold);
        Ok(Trainer {
            optimizer: Optimizer::new(config.optimizer, &model.params),
            prng: Prng::new(config.seed),
            step: 0,
            tracker,
            newbob,
            plateau: false,
            config,
        })
    }

    pub fn warmup_done(&self) -> bool {
        self.step >= self.config.warmup.steps
    }

    pub fn lr(&self) -> f64 {
        if self.warmup_done() {
            self.newbob.lr
        } else {
            warmup_lr(self.step, &self.config.warmup)
        }
    }

    pub fn sampling_prob(&self) -> f64 {
        self.config.sampling.prob(self.step, self.plateau)
    }

    /// Seeded permutation of `0..n` for the next epoch.
    pub fn epoch_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.prng.shuffle(&mut order);
        order
    }

    fn apply(&mut self, model: &mut LasModel, mut grads: Vec<Tensor>, lr: f64) -> Result<ClipReport> {
        let clip = self.tracker.track_and_clip(&mut grads)?;
        self.optimizer.step(&mut model.params, &grads, lr)?;
        self.step += 1;
        Ok(clip)
    }

    /// One cross-entropy update on `batch`.
    pub fn ce_batch(&mut self, model: &mut LasModel, batch: &[Example<'_>]) -> Result<BatchReport> {
        let lr = self.lr();
        let p = self.sampling_prob();
        let opts = CeOptions { sampling_prob: p, smoothing: self.config.smoothing };
        let (loss, grads) = {
            let mut tape = Tape::with_params(&model.params);
            let out = forward_ce(&mut tape, model, batch, &opts, &mut self.prng)?;
            let loss = tape.scalar(out.loss);
            if !loss.is_finite() {
                return Err(Error::numeric(format!("training diverged: loss {loss} at step {}", self.step)));
            }
            (loss, tape.backward(out.loss)?.into_params())
        };
        let clip = self.apply(model, grads, lr)?;
        Ok(BatchReport { loss, lr, sampling_prob: p, clip, expected_error: None })
    }

    /// Records a validation loss. New-bob only reacts once warmup is over;
    /// its first decay raises the plateau signal. Returns whether the rate
    /// decayed.
    pub fn end_epoch(&mut self, val_loss: f64) -> Result<bool> {
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!("validation loss is {val_loss}")));
        }
        if !self.warmup_done() {
            return Ok(false);
        }
        let decayed = self.newbob.update(val_loss)?;
        if decayed {
            self.plateau = true;
        }
        Ok(decayed)
    }

    /// One MWER update: decode an n-best list per utterance with the
    /// current model, then minimize the expected normalized word errors
    /// plus `λ ·` cross-entropy. Hypotheses that never emitted `</s>` are
    /// left out of the n-best list.
    pub fn mwer_batch(
        &mut self,
        model: &mut LasModel,
        vocab: &WordPieceVocab,
        batch: &[Example<'_>],
    ) -> Result<BatchReport> {
        let cfg = self.config.mwer;
        let lr = self.config.mwer_lr;
        let mut nbests = Vec::with_capacity(batch.len());
        for ex in batch {
            nbests.push(mwer_nbest(model, ex.features, cfg.n)?.into_iter().map(|h| h.tokens).collect::<Vec<_>>());
        }

        let opts = CeOptions { sampling_prob: 0.0, smoothing: self.config.smoothing };
        let (loss, expected, grads) = {
            let mut tape = Tape::with_params(&model.params);
            let vars = SpellerVars::bind(&mut tape, model)?;
            let gamma = tape.scalar_constant(cfg.gamma);
            let mut terms = Vec::with_capacity(batch.len());
            let mut expected = 0.0;
            for (ex, hyps) in batch.iter().zip(&nbests) {
                let ce = forward_ce(&mut tape, model, core::slice::from_ref(ex), &opts, &mut self.prng)?.loss;
                let reference: Vec<String> = merge_wordpieces(ex.tokens, vocab);
                if reference.is_empty() {
                    return Err(Error::invalid("MWER reference has no words"));
                }
                if hyps.is_empty() {
                    terms.push(tape.scale(ce, cfg.lambda));
                    continue;
                }
                let x = tape.constant_ref(ex.features);
                let h = listen_on(&mut tape, model, x)?;
                let memory = EncoderMemory::new(&mut tape, &vars.attention, h)?;
                let mut logps = Vec::with_capacity(hyps.len());
                let mut errors = Vec::with_capacity(hyps.len());
                for hyp in hyps {
                    debug_assert_eq!(hyp.last(), Some(&EOS));
                    logps.push(sequence_logprob(&mut tape, model, &vars, &memory, hyp)?);
                    errors.push(edit_distance(&reference, &merge_wordpieces(hyp, vocab)).total() as f64);
                }
                let term = mwer_loss_on(&mut tape, &logps, &errors, reference.len(), gamma, cfg.lambda, ce)?;
                let ce_part = cfg.lambda * tape.scalar(ce);
                expected += tape.scalar(term) - ce_part;
                terms.push(term);
            }
            let total = tape.add_n(&terms)?;
            let loss = tape.scale(total, 1.0 / terms.len() as f64);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::numeric(format!("MWER diverged: loss {value} at step {}", self.step)));
            }
            (value, expected / batch.len() as f64, tape.backward(loss)?.into_params())
        };
        let clip = self.apply(model, grads, lr)?;
        Ok(BatchReport { loss, lr, sampling_prob: 0.0, clip, expected_error: Some(expected) })
    }
}

/// Finished hypotheses of an `n`-wide beam without LM fusion.
pub fn mwer_nbest(model: &LasModel, features: &Tensor, n: usize) -> Result<Vec<Hypothesis>> {
    let beam_cfg = BeamConfig { beam: n, nbest: n, lm_weight: 0.0, ..BeamConfig::default() };
    let scorer = LasScorer::new(model, features)?;
    let steps = beam_cfg.steps_for(scorer.encoder_len());
    let hyps = beam_search(&scorer, None::<&NoLm>, &beam_cfg, steps)?;
    Ok(hyps.into_iter().filter(|h| h.finished).collect())
}

/// Mean over `data` of the normalized expected word errors
/// `(1/L) Σ_i P*_i W_i` on each utterance's current n-best list.
pub fn evaluate_mwer(model: &LasModel, vocab: &WordPieceVocab, data: &[Example<'_>], cfg: &MwerConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("no evaluation data"));
    }
    let mut total = 0.0;
    for ex in data {
        let reference = merge_wordpieces(ex.tokens, vocab);
        let nbest: Vec<(Vec<String>, f64)> = mwer_nbest(model, ex.features, cfg.n)?
            .into_iter()
            .map(|h| (merge_wordpieces(&h.tokens, vocab), h.las_logp))
            .collect();
        if !nbest.is_empty() {
            total += mwer_loss(&nbest, &reference, cfg.gamma, 0.0, 0.0)?.expected_error;
        }
    }
    Ok(total / data.len() as f64)
}

/// Mean label-smoothed cross-entropy with sampling disabled.
pub fn evaluate_ce(model: &LasModel, data: &[Example<'_>], smoothing: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("no evaluation data"));
    }
    let opts = CeOptions { sampling_prob: 0.0, smoothing };
    let mut prng = Prng::new(0);
    let mut tape = Tape::with_params(&model.params);
    let out = forward_ce(&mut tape, model, data, &opts, &mut prng)?;
    Ok(tape.scalar(out.loss))
}
