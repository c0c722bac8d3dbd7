//! Optimizer, learning-rate schedule, training loops and evaluation.

mod classify;
mod eval;
mod grid;
mod log;
mod optim;
mod segment;

use rayon::prelude::*;

use crate::error::Result;
use crate::models::Checkpoint;
use crate::tensor::{mix_seed, Prng};

pub use classify::{prepare_classification, train_classifier, ClsTrainConfig, LabeledPair, MaskSource, RegimeSpec};
pub use eval::{evaluate, EvalMode, EvalModels};
pub use grid::{run_regime_grid, summary_csv, GridConfig, GridOutput, RegimeRow, REGIME_SUMMARY_HEADER, TABLE_REGIMES};
pub use log::{StepRecord, TrainLog, ValidationRecord, TRAIN_LOG_HEADER};
pub use optim::{Scheduler, Sgd, SgdConfig};
pub use segment::{train_segmentation, SegLoss, SegTrainConfig, WarmStart};

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub log: TrainLog,
    /// Parameters at the best validation event, or the final parameters
    /// when no validation ran.
    pub best: Checkpoint,
    pub last: Checkpoint,
}

// seed domains, kept apart so that shuffling and augmentation draws never
// collide
const SHUFFLE: u64 = 0x5348_5546;
const AUGMENT: u64 = 0x4155_474d;

/// Shuffled sample order for one epoch.
fn epoch_order(seed: u64, phase: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Prng::new(mix_seed(seed, &[SHUFFLE, phase, epoch])).shuffle(&mut order);
    order
}

fn augment_seed(seed: u64, phase: u64, epoch: u64, index: usize) -> u64 {
    mix_seed(seed, &[AUGMENT, phase, epoch, index as u64])
}

/// Runs `f` over a batch in parallel; the result order follows `indices`.
fn prepare_batch<R: Send>(indices: &[usize], f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    indices.par_iter().map(|&i| f(i)).collect()
}
