use alloc::format;

use crate::error::{Error, Result};

/// Linear learning-rate warmup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Warmup {
    pub lr_start: f64,
    pub lr_end: f64,
    pub steps: usize,
}

impl Default for Warmup {
    fn default() -> Self {
        Warmup {
            lr_start: 0.0002,
            lr_end: 0.002,
            steps: 1000,
        }
    }
}

/// Learning rate at `step`: linear from `lr_start` to `lr_end` over
/// `steps`, then `lr_end`.
pub fn warmup_lr(step: usize, cfg: &Warmup) -> f64 {
    if step >= cfg.steps {
        return cfg.lr_end;
    }
    let frac = step as f64 / cfg.steps as f64;
    cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac
}

/// Learning-rate decay on stalled validation loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewBob {
    pub lr: f64,
    /// Lowest validation loss seen; `None` before the first update.
    pub best: Option<f64>,
    pub decay: f64,
    /// Minimum relative improvement `(best - val) / best`.
    pub threshold: f64,
    pub decays: usize,
}

impl NewBob {
    pub fn new(lr: f64, decay: f64, threshold: f64) -> Self {
        NewBob {
            lr,
            best: None,
            decay,
            threshold,
            decays: 0,
        }
    }

    /// Applies one validation result and reports whether the rate decayed.
    /// The first call only records the loss.
    pub fn update(&mut self, val_loss: f64) -> Result<bool> {
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!("validation loss is {val_loss}")));
        }
        let Some(best) = self.best else {
            self.best = Some(val_loss);
            return Ok(false);
        };
        let decayed = (best - val_loss) / best < self.threshold;
        if decayed {
            self.lr *= self.decay;
            self.decays += 1;
        }
        self.best = Some(best.min(val_loss));
        Ok(decayed)
    }
}

/// How the scheduled-sampling probability evolves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingSchedule {
    /// From `start` to `end` linearly over `ramp_steps`, then `end`.
    LinearRamp { start: f64, end: f64, ramp_steps: usize },
    /// `base` until the plateau signal fires, `boosted` afterwards.
    PlateauStep { base: f64, boosted: f64 },
    Constant(f64),
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        SamplingSchedule::PlateauStep { base: 0.1, boosted: 0.2 }
    }
}

impl SamplingSchedule {
    pub fn validate(&self) -> Result<()> {
        let probs: &[f64] = match self {
            SamplingSchedule::LinearRamp { start, end, .. } => &[*start, *end],
            SamplingSchedule::PlateauStep { base, boosted } => &[*base, *boosted],
            SamplingSchedule::Constant(p) => &[*p],
        };
        if probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::invalid("sampling probabilities must lie in [0, 1]"))
        }
    }

    pub fn prob(&self, step: usize, plateau: bool) -> f64 {
        match *self {
            SamplingSchedule::LinearRamp { start, end, ramp_steps } => {
                if step >= ramp_steps {
                    end
                } else {
                    start + (end - start) * step as f64 / ramp_steps as f64
                }
            }
            SamplingSchedule::PlateauStep { base, boosted } => {
                if plateau {
                    boosted
                } else {
                    base
                }
            }
            SamplingSchedule::Constant(p) => p,
        }
    }
}
