//! Flat `key = value` configuration.
//!
//! Blank lines and text after `#` are ignored. Every key is optional;
//! anything not listed below is rejected.
//!
//! | key | default |
//! |-----|---------|
//! | `feature_dim`, `num_mel_bins` | 40 |
//! | `listener_layers`, `listener_hidden` | 3, 1024 |
//! | `speller_layers`, `speller_hidden` | 2, 512 |
//! | `embed_dim`, `attention_dim` | 512, 512 |
//! | `conv_filters`, `conv_width` | 20, 100 |
//! | `location_aware` | true |
//! | `alignment_history` | `accumulated` or `previous` |
//! | `wordpieces` | 500 |
//! | `window_ms`, `hop_ms`, `preemphasis` | 25, 10, 0.97 |
//! | `low_freq`, `high_freq` | 20, Nyquist |
//! | `cmvn` | false |
//! | `speed_factors` | `0.9,1.1` |
//! | `lr_start`, `lr_end` (alias `lr`), `warmup_steps` | 0.0002, 0.002, 1000 |
//! | `newbob_decay`, `newbob_threshold` | 0.9, 0.001 |
//! | `label_smoothing` (alias `smoothing`) | 0.01 |
//! | `sampling_strategy` | `plateau-step`, `linear-ramp` or `constant` |
//! | `sampling_base`, `sampling_boosted` | 0.1, 0.2 |
//! | `sampling_start`, `sampling_end`, `sampling_ramp_steps` | 0, 0.2, 10000 |
//! | `sampling_prob` | 0.1 (constant strategy) |
//! | `batch_size`, `epochs`, `optimizer` | 8, 10, `sgd` or `adam` |
//! | `tracker_decay`, `tracker_std_factor`, `static_clip` | 0.95, 2.0, 5.0 |
//! | `mwer_n`, `mwer_gamma`, `mwer_lambda` | 4, 0.5, 0.01 |
//! | `mwer_epochs`, `mwer_lr` | 0, 0.0002 |
//! | `checkpoint_dtype` | `f32` or `f64` |
//! | `seed` | 1 |
//! | `beam`, `nbest`, `lm_weight`, `length_alpha` | 16, 16, 0.3, 0.6 |
//! | `max_steps` | 0 (means `2U + 10`) |
//! | `ngram_order`, `ngram_discount`, `unk_penalty` | 3, 0.5, -10 |
//! | `nnlm_embed_dim`, `nnlm_hidden`, `nnlm_layers` | 256, 1024, 2 |
//! | `nnlm_epochs`, `nnlm_lr`, `nnlm_batch_size` | 5, 0.001, 16 |

use std::path::Path;
use std::str::FromStr;

use las_core::decoder::BeamConfig;
use las_core::lm::NeuralLmConfig;
use las_core::model::{AlignmentHistory, LasConfig};
use las_core::training::{OptimizerKind, SamplingSchedule, TrainConfig};

use crate::error::{read_text, Error, Result};
use crate::formats::{Dtype, DEFAULT_UNK_PENALTY};
use crate::frontend::FbankConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct LmSettings {
    pub ngram_order: usize,
    pub ngram_discount: f64,
    pub unk_penalty: f64,
    pub nnlm: NeuralLmConfig,
    pub nnlm_epochs: usize,
    pub nnlm_lr: f64,
    pub nnlm_batch_size: usize,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            ngram_order: 3,
            ngram_discount: 0.5,
            unk_penalty: DEFAULT_UNK_PENALTY,
            nnlm: NeuralLmConfig::default(),
            nnlm_epochs: 5,
            nnlm_lr: 0.001,
            nnlm_batch_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// `vocab_size` is replaced by the vocabulary actually loaded.
    pub model: LasConfig,
    pub frontend: FbankConfig,
    pub wordpieces: usize,
    pub speed_factors: Vec<f64>,
    pub train: TrainConfig,
    pub checkpoint_dtype: Dtype,
    pub beam: BeamConfig,
    pub lm: LmSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: LasConfig::default(),
            frontend: FbankConfig::default(),
            wordpieces: 500,
            speed_factors: vec![0.9, 1.1],
            train: TrainConfig::default(),
            checkpoint_dtype: Dtype::F32,
            beam: BeamConfig::default(),
            lm: LmSettings::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Strategy {
    PlateauStep,
    LinearRamp,
    Constant,
}

struct Sampling {
    strategy: Strategy,
    base: f64,
    boosted: f64,
    start: f64,
    end: f64,
    ramp_steps: usize,
    constant: f64,
}

struct Field<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

impl Field<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Config { line: self.line, key: self.key.to_string(), message: message.into() }
    }

    fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| self.err(format!("cannot parse {:?}", self.value)))
    }

    fn positive(&self) -> Result<usize> {
        let v: usize = self.parse()?;
        if v == 0 {
            return Err(self.err("must be positive"));
        }
        Ok(v)
    }

    fn real(&self, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        let v: f64 = self.parse()?;
        if !v.is_finite() || !ok(v) {
            return Err(self.err(format!("{v} is outside {range}")));
        }
        Ok(v)
    }

    fn probability(&self) -> Result<f64> {
        self.real(|v| (0.0..=1.0).contains(&v), "[0, 1]")
    }

    fn rate(&self) -> Result<f64> {
        self.real(|v| v > 0.0, "(0, ∞)")
    }

    fn flag(&self) -> Result<bool> {
        match self.value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(self.err(format!("expected a boolean, got {v:?}"))),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        let mut s = Sampling {
            strategy: Strategy::PlateauStep,
            base: 0.1,
            boosted: 0.2,
            start: 0.0,
            end: 0.2,
            ramp_steps: 10000,
            constant: 0.1,
        };
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config { line: i + 1, key: line.to_string(), message: "expected `key = value`".into() });
            };
            let f = Field { key: key.trim(), value: value.trim(), line: i + 1 };
            let canonical = match f.key {
                "smoothing" => "label_smoothing",
                "lr" => "lr_end",
                "num_mel_bins" => "feature_dim",
                k => k,
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| k == canonical) {
                return Err(f.err(format!("already set on line {first}")));
            }
            seen.push((canonical.to_string(), f.line));
            c.apply(&f, canonical, &mut s)?;
        }
        c.frontend.num_mel_bins = c.model.feature_dim;
        c.train.sampling = match s.strategy {
            Strategy::PlateauStep => SamplingSchedule::PlateauStep { base: s.base, boosted: s.boosted },
            Strategy::LinearRamp => SamplingSchedule::LinearRamp { start: s.start, end: s.end, ramp_steps: s.ramp_steps },
            Strategy::Constant => SamplingSchedule::Constant(s.constant),
        };
        let whole = |key: &str, e: las_core::Error| Error::Config { line: 0, key: key.to_string(), message: e.to_string() };
        c.train.validate().map_err(|e| whole("training", e))?;
        c.beam.validate().map_err(|e| whole("beam", e))?;
        Ok(c)
    }

    fn apply(&mut self, f: &Field<'_>, key: &str, s: &mut Sampling) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "feature_dim" => m.feature_dim = f.positive()?,
            "listener_layers" => m.listener_layers = f.positive()?,
            "listener_hidden" => m.listener_hidden = f.positive()?,
            "speller_layers" => m.speller_layers = f.positive()?,
            "speller_hidden" => m.speller_hidden = f.positive()?,
            "embed_dim" => m.embed_dim = f.positive()?,
            "attention_dim" => m.attention_dim = f.positive()?,
            "conv_filters" => m.conv_filters = f.positive()?,
            "conv_width" => m.conv_width = f.positive()?,
            "location_aware" => m.location_aware = f.flag()?,
            "alignment_history" => {
                m.history = match f.value {
                    "accumulated" => AlignmentHistory::Accumulated,
                    "previous" => AlignmentHistory::Previous,
                    v => return Err(f.err(format!("expected accumulated or previous, got {v:?}"))),
                }
            }
            "wordpieces" => {
                self.wordpieces = f.parse()?;
                if self.wordpieces < 5 {
                    return Err(f.err("need at least 5 pieces"));
                }
            }
            "window_ms" => self.frontend.window_ms = f.rate()?,
            "hop_ms" => self.frontend.hop_ms = f.rate()?,
            "preemphasis" => self.frontend.preemphasis = f.real(|v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "low_freq" => self.frontend.low_freq = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "high_freq" => self.frontend.high_freq = Some(f.rate()?),
            "cmvn" => self.frontend.cmvn = f.flag()?,
            "speed_factors" => {
                self.speed_factors = f
                    .value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| f.err("expected comma-separated positive factors"))?;
            }
            "lr_start" => t.warmup.lr_start = f.rate()?,
            "lr_end" => t.warmup.lr_end = f.rate()?,
            "warmup_steps" => t.warmup.steps = f.parse()?,
            "newbob_decay" => t.newbob_decay = f.real(|v| v > 0.0 && v <= 1.0, "(0, 1]")?,
            "newbob_threshold" => t.newbob_threshold = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "label_smoothing" => t.smoothing = f.real(|v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "sampling_strategy" => {
                s.strategy = match f.value {
                    "plateau-step" => Strategy::PlateauStep,
                    "linear-ramp" => Strategy::LinearRamp,
                    "constant" => Strategy::Constant,
                    v => return Err(f.err(format!("expected plateau-step, linear-ramp or constant, got {v:?}"))),
                }
            }
            "sampling_base" => s.base = f.probability()?,
            "sampling_boosted" => s.boosted = f.probability()?,
            "sampling_start" => s.start = f.probability()?,
            "sampling_end" => s.end = f.probability()?,
            "sampling_ramp_steps" => s.ramp_steps = f.parse()?,
            "sampling_prob" => s.constant = f.probability()?,
            "batch_size" => t.batch_size = f.positive()?,
            "epochs" => t.epochs = f.parse()?,
            "optimizer" => {
                t.optimizer = match f.value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    v => return Err(f.err(format!("expected sgd or adam, got {v:?}"))),
                }
            }
            "tracker_decay" => t.tracker_decay = f.real(|v| (0.0..1.0).contains(&v), "[0, 1)")?,
            "tracker_std_factor" => t.tracker_std_factor = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "static_clip" => t.static_cap = f.rate()?,
            "mwer_n" => t.mwer.n = f.positive()?,
            "mwer_gamma" => t.mwer.gamma = f.real(|v| v > 0.0 && v <= 1.0, "(0, 1]")?,
            "mwer_lambda" => t.mwer.lambda = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "mwer_epochs" => t.mwer_epochs = f.parse()?,
            "mwer_lr" => t.mwer_lr = f.rate()?,
            "seed" => t.seed = f.parse()?,
            "checkpoint_dtype" => {
                self.checkpoint_dtype = match f.value {
                    "f32" => Dtype::F32,
                    "f64" => Dtype::F64,
                    v => return Err(f.err(format!("expected f32 or f64, got {v:?}"))),
                }
            }
            "beam" => self.beam.beam = f.positive()?,
            "nbest" => self.beam.nbest = f.positive()?,
            "lm_weight" => self.beam.lm_weight = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "length_alpha" => self.beam.length_alpha = f.real(|v| v >= 0.0, "[0, ∞)")?,
            "max_steps" => self.beam.max_steps = Some(f.parse::<usize>()?).filter(|&n| n > 0),
            "ngram_order" => self.lm.ngram_order = f.positive()?,
            "ngram_discount" => self.lm.ngram_discount = f.real(|v| v > 0.0 && v < 1.0, "(0, 1)")?,
            "unk_penalty" => self.lm.unk_penalty = f.real(|v| v <= 0.0, "(-∞, 0]")?,
            "nnlm_embed_dim" => self.lm.nnlm.embed_dim = f.positive()?,
            "nnlm_hidden" => self.lm.nnlm.hidden = f.positive()?,
            "nnlm_layers" => self.lm.nnlm.layers = f.positive()?,
            "nnlm_epochs" => self.lm.nnlm_epochs = f.parse()?,
            "nnlm_lr" => self.lm.nnlm_lr = f.rate()?,
            "nnlm_batch_size" => self.lm.nnlm_batch_size = f.positive()?,
            _ => return Err(f.err("unknown key")),
        }
        Ok(())
    }
}
