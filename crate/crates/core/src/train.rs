//! The training loop: strategy dispatch, the original/midpoint step
//! alternation, learning-rate decay, and per-epoch logging.
//!
//! Step parity is global (step 0 is an original step), so the alternation
//! survives epoch boundaries with odd batch counts.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batches, Batch, Dataset};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::{loss_and_backward, sgd_step, HeadMode, Model, ModelConfig, OptimizerState};
use crate::rng::{self, stream_rng};
use crate::smoothing::{self, TargetStrategy};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub strategy: TargetStrategy,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Top-level experiment seed; every random stream derives from it.
    #[serde(default)]
    pub seed: u64,
    /// PLS-family switch: interleave original batches with midpoint batches.
    /// Setting it to false is the "no original samples" ablation.
    #[serde(default = "default_true")]
    pub alternate_originals: bool,
    /// Compute the validation error every this many epochs.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    /// Fractions of the epoch budget after which the learning rate is
    /// multiplied by decay_factor.
    #[serde(default = "default_decay_milestones")]
    pub decay_milestones: Vec<f64>,
    /// Pins the Mixup mixing coefficient instead of drawing it per batch;
    /// exists for the reduction experiments (Mixup at λ=0.5 is midpoint
    /// training).
    #[serde(default)]
    pub fixed_mixup_lambda: Option<f64>,
}

fn default_batch_size() -> usize {
    128
}

fn default_learning_rate() -> f64 {
    0.05
}

fn default_momentum() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

fn default_eval_every() -> usize {
    1
}

fn default_decay_factor() -> f64 {
    0.1
}

fn default_decay_milestones() -> Vec<f64> {
    vec![0.6, 0.8]
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.strategy.uses_pairing() && self.batch_size < 2 {
            return Err(Error::Config(
                "pairing strategies need batch_size >= 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0,1)".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(0.0 < self.decay_factor && self.decay_factor <= 1.0) {
            return Err(Error::Config("decay_factor must lie in (0,1]".into()));
        }
        if self.decay_milestones.iter().any(|&m| !(0.0 < m && m < 1.0)) {
            return Err(Error::Config("decay milestones must lie in (0,1)".into()));
        }
        if let Some(l) = self.fixed_mixup_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config("fixed_mixup_lambda must lie in [0,1]".into()));
            }
        }
        Ok(())
    }

    /// Learning rate in force during the given (0-based) epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let passed = self
            .decay_milestones
            .iter()
            .filter(|&&m| epoch >= (m * self.epochs as f64).floor() as usize)
            .count();
        self.learning_rate * self.decay_factor.powi(passed as i32)
    }
}

/// What one optimizer step trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Unmodified batch (x_ii path, and every Baseline/ULS step).
    Original,
    /// Midpoint pairs (x_ij path).
    Midpoint,
    /// Mixup pairs with a drawn (or pinned) coefficient.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: Option<f64>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub epochs: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
    pub step_kinds: Vec<StepKind>,
}

impl RunLog {
    /// CSV stream `epoch,train_loss,val_error` (empty field when the epoch
    /// had no validation pass). Deliberately excludes wall-clock fields so
    /// identical runs produce identical bytes.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "epoch,train_loss,val_error")?;
        for rec in &self.epochs {
            match rec.val_error {
                Some(v) => writeln!(out, "{},{},{}", rec.epoch, rec.train_loss, v)?,
                None => writeln!(out, "{},{},", rec.epoch, rec.train_loss)?,
            }
        }
        Ok(())
    }
}

/// The distribution handed to the cross-entropy's first slot plus the
/// learned-term weight, given the base labels of this step (one-hot rows on
/// original steps, mixed rows on paired steps).
pub fn build_step_targets(strategy: &TargetStrategy, base_q: &Matrix) -> Result<(Matrix, f64)> {
    match strategy {
        TargetStrategy::Baseline | TargetStrategy::Mixup | TargetStrategy::PlsNoLearned => {
            Ok((base_q.clone(), 0.0))
        }
        TargetStrategy::Uls { alpha } => Ok((smoothing::uls_target(base_q, *alpha)?, 0.0)),
        TargetStrategy::MixupUls { alpha } | TargetStrategy::PlsUd { alpha } => {
            Ok((smoothing::ud_smoothing(base_q, *alpha)?, 0.0))
        }
        TargetStrategy::Pls { w } | TargetStrategy::PlsCoeff { w } => Ok((base_q.clone(), *w)),
    }
}

/// Trains a freshly initialized model. The validation set (when given) only
/// feeds the per-epoch error column of the log.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
) -> Result<(Model, RunLog)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_set.num_classes != model_cfg.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model is configured for {}",
            train_set.num_classes, model_cfg.num_classes
        )));
    }
    if let Some(val) = val_set {
        if val.num_classes != model_cfg.num_classes || val.dim() != train_set.dim() {
            return Err(Error::Config("validation set does not match the training set".into()));
        }
    }
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }

    let head_mode = if cfg.strategy.wants_scalar_head() {
        HeadMode::Coefficient
    } else {
        HeadMode::Distribution
    };
    let mut init_rng = stream_rng(cfg.seed, rng::STREAM_INIT);
    let mut model = Model::init(model_cfg, train_set.dim(), head_mode, &mut init_rng)?;
    let mut opt = OptimizerState::new(&model, cfg.learning_rate, cfg.momentum)?;
    let mut pairing_rng = stream_rng(cfg.seed, rng::STREAM_PAIRING);
    let mut mixing_rng = stream_rng(cfg.seed, rng::STREAM_MIXING);

    let started = Instant::now();
    let mut log = RunLog::default();
    let mut step_index: u64 = 0;

    for epoch in 0..cfg.epochs {
        opt.set_learning_rate(cfg.learning_rate_at(epoch));
        let mut epoch_loss_sum = 0.0;
        let mut epoch_steps = 0usize;
        for batch in batches(train_set, cfg.batch_size, cfg.seed, epoch as u64)? {
            let (inputs, base_q, kind) = prepare_step(
                &cfg.strategy,
                cfg.alternate_originals,
                step_index,
                &batch,
                &mut pairing_rng,
                &mut mixing_rng,
                cfg.fixed_mixup_lambda,
            );
            let (targets, w) = build_step_targets(&cfg.strategy, &base_q)?;
            let trace = model.forward(&inputs)?;
            let (loss, grads) = loss_and_backward(&model, &trace, &targets, w)?;
            sgd_step(&mut model, &grads, &mut opt)?;
            log.step_losses.push(loss);
            log.step_kinds.push(kind);
            epoch_loss_sum += loss;
            epoch_steps += 1;
            step_index += 1;
        }

        let want_val = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        let val_error = match val_set {
            Some(val) if want_val => Some(eval::error_rate(&model, val)?),
            _ => None,
        };
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: epoch_loss_sum / epoch_steps as f64,
            val_error,
            elapsed_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// Chooses this step's inputs and base labels. Original steps pass the batch
/// through; paired steps draw a fresh permutation (and Mixup its coefficient).
fn prepare_step(
    strategy: &TargetStrategy,
    alternate_originals: bool,
    step_index: u64,
    batch: &Batch,
    pairing_rng: &mut impl rand::Rng,
    mixing_rng: &mut impl rand::Rng,
    fixed_lambda: Option<f64>,
) -> (Matrix, Matrix, StepKind) {
    let original = || (batch.inputs.clone(), batch.onehot.clone(), StepKind::Original);
    match strategy {
        TargetStrategy::Baseline | TargetStrategy::Uls { .. } => original(),
        TargetStrategy::Mixup | TargetStrategy::MixupUls { .. } => {
            let perm = smoothing::random_permutation(batch.len(), pairing_rng);
            let lambda = fixed_lambda.unwrap_or_else(|| mixing_rng.gen::<f64>());
            let paired = smoothing::mixup(batch, &perm, lambda);
            (paired.inputs, paired.q, StepKind::Mixed)
        }
        TargetStrategy::Pls { .. }
        | TargetStrategy::PlsUd { .. }
        | TargetStrategy::PlsCoeff { .. }
        | TargetStrategy::PlsNoLearned => {
            if alternate_originals && step_index % 2 == 0 {
                original()
            } else {
                let perm = smoothing::random_permutation(batch.len(), pairing_rng);
                let paired = smoothing::midpoint(batch, &perm);
                (paired.inputs, paired.q, StepKind::Midpoint)
            }
        }
    }
}
