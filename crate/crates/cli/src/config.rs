//! The experiment configuration file: one JSON document describing dataset,
//! split, model, training and evaluation. Unknown keys are rejected
//! everywhere, and the whole document is validated before any work starts.
//!
//! The top-level `seed` is the only seed; it overrides whatever the train
//! block says, so all random streams of a run derive from one number.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use plslab_core::data::DatasetConfig;
use plslab_core::eval::{default_temperature_grid, EvalOptions};
use plslab_core::nn::ModelConfig;
use plslab_core::train::TrainConfig;

use crate::failure::{usage, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub split: SplitBlock,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalBlock,
    /// Fit mean/std normalization on the training split and apply it to every
    /// split (stored in the checkpoint for later evaluation).
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitBlock {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitBlock {
    pub fn fractions(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    #[serde(default = "default_ece_bins")]
    pub ece_bins: usize,
    #[serde(default = "default_bin_width")]
    pub hist_bin_width: f64,
    #[serde(default)]
    pub hist_min_score: f64,
    /// Search grid for temperature scaling; the 0.05..2.00 grid when absent.
    #[serde(default)]
    pub temperature_grid: Option<GridSpec>,
    /// Out-of-distribution probe dataset for `eval --ood`.
    #[serde(default)]
    pub ood: Option<DatasetConfig>,
}

fn default_ece_bins() -> usize {
    15
}

fn default_bin_width() -> f64 {
    0.05
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            ece_bins: default_ece_bins(),
            hist_bin_width: default_bin_width(),
            hist_min_score: 0.0,
            temperature_grid: None,
            ood: None,
        }
    }
}

impl EvalBlock {
    pub fn options(&self, temperature: Option<f64>) -> EvalOptions {
        EvalOptions {
            ece_bins: self.ece_bins,
            hist_bin_width: self.hist_bin_width,
            hist_min_score: self.hist_min_score,
            temperature,
        }
    }

    pub fn grid(&self) -> CliResult<Vec<f64>> {
        match &self.temperature_grid {
            Some(spec) => spec.values(),
            None => Ok(default_temperature_grid()),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        if !(self.start > 0.0) || !(self.step > 0.0) || self.stop < self.start {
            return Err(usage(format!(
                "temperature grid needs 0 < start <= stop and step > 0, got start={} stop={} step={}",
                self.start, self.stop, self.step
            )));
        }
        let n = ((self.stop - self.start) / self.step).round() as usize;
        let grid: Vec<f64> = (0..=n)
            .map(|i| self.start + i as f64 * self.step)
            .filter(|&t| t <= self.stop + 1e-12)
            .collect();
        Ok(grid)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        for (name, f) in [
            ("train", self.split.train),
            ("val", self.split.val),
            ("test", self.split.test),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(usage(format!("split.{name} must lie in (0,1), got {f}")));
            }
        }
        let total = self.split.train + self.split.val + self.split.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(usage(format!("split fractions must sum to 1, got {total}")));
        }
        if self.eval.ece_bins == 0 {
            return Err(usage("eval.ece_bins must be positive"));
        }
        let w = self.eval.hist_bin_width;
        if !(w > 0.0 && w <= 1.0) || ((1.0 / w).round() * w - 1.0).abs() > 1e-9 {
            return Err(usage(format!("eval.hist_bin_width must divide 1 evenly, got {w}")));
        }
        if !(0.0..=1.0).contains(&self.eval.hist_min_score) {
            return Err(usage(format!(
                "eval.hist_min_score must lie in [0,1], got {}",
                self.eval.hist_min_score
            )));
        }
        self.eval.grid()?;
        Ok(())
    }
}

/// Reads, hashes, parses and validates a config file. The returned string is
/// the provenance stamp: the first 12 hex digits of the file's SHA-256.
pub fn load_config(path: &Path) -> CliResult<(ExperimentConfig, String)> {
    let bytes = fs::read(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let hash: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let mut cfg: ExperimentConfig = serde_json::from_slice(&bytes)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
    cfg.validate()?;
    cfg.train.seed = cfg.seed;
    Ok((cfg, hash))
}
