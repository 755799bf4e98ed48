//! Optimization and the machinery that keeps it stable.

mod clip;
mod metrics;
mod mwer;
mod optim;
mod schedule;
mod trainer;

pub use clip::{global_norm, ClipReport, GradNormTracker};
pub use metrics::{edit_distance, wer, wer_counts, EditCounts, WerReport};
pub use mwer::{mwer_loss, mwer_loss_on, scaled_posteriors, MwerConfig, MwerValue};
pub use optim::{Adam, Optimizer, OptimizerKind};
pub use schedule::{warmup_lr, NewBob, SamplingSchedule, Warmup};
pub use trainer::{evaluate_ce, evaluate_mwer, mwer_nbest, BatchReport, TrainConfig, Trainer};
