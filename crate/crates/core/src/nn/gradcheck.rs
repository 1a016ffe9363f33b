//! Finite-difference verification of the analytic gradients.
//!
//! Central differences on every single parameter: slow (two forward passes
//! per scalar) but the most direct oracle there is. Meant for tiny networks.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::loss::{compute_loss, Gradients};
use crate::nn::{loss_and_backward, HeadMode, Model};
use crate::smoothing::{self, TargetStrategy};
use crate::tensor::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensor_checks: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.tensor_checks {
            writeln!(
                f,
                "{:>18}  max rel err {:>12.3e}  {}",
                c.name,
                c.max_rel_error,
                if c.passed { "ok" } else { "FAIL" }
            )?;
        }
        write!(
            f,
            "overall max rel err {:.3e} vs tolerance {:.1e}: {}",
            self.max_rel_error,
            self.tolerance,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

/// Central finite differences of the loss for every parameter scalar.
pub fn fd_gradients(model: &Model, inputs: &Matrix, q: &Matrix, w: f64, epsilon: f64) -> Result<Gradients> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(probe.num_tensors());
    for i in 0..probe.num_tensors() {
        let (rows, cols) = probe.tensor(i).shape();
        let mut grad = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let original = probe.tensor(i).get(r, c);
                probe.tensor_mut(i).set(r, c, original + epsilon);
                let plus = compute_loss(&probe.forward(inputs)?, q, w)?;
                probe.tensor_mut(i).set(r, c, original - epsilon);
                let minus = compute_loss(&probe.forward(inputs)?, q, w)?;
                probe.tensor_mut(i).set(r, c, original);
                grad.set(r, c, (plus - minus) / (2.0 * epsilon));
            }
        }
        tensors.push(grad);
    }
    Ok(Gradients { tensors })
}

/// Relative error between two gradient estimates for one scalar.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Per-tensor maximum relative error between two gradient sets.
pub fn compare_gradients(model: &Model, analytic: &Gradients, fd: &Gradients, tolerance: f64) -> GradCheckReport {
    let mut checks = Vec::with_capacity(analytic.tensors.len());
    let mut overall: f64 = 0.0;
    for (i, (a, f)) in analytic.tensors.iter().zip(&fd.tensors).enumerate() {
        let mut worst: f64 = 0.0;
        for (&x, &y) in a.data().iter().zip(f.data()) {
            worst = worst.max(rel_error(x, y));
        }
        overall = overall.max(worst);
        checks.push(TensorCheck {
            name: model.tensor_name(i),
            max_rel_error: worst,
            passed: worst < tolerance,
        });
    }
    GradCheckReport {
        tensor_checks: checks,
        max_rel_error: overall,
        tolerance,
        passed: overall < tolerance,
    }
}

/// Builds the step inputs and targets a strategy would use (pairing by a
/// fixed one-step rotation so the check is deterministic), then compares
/// analytic and finite-difference gradients.
pub fn gradient_check(
    model: &Model,
    batch: &Batch,
    strategy: &TargetStrategy,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    strategy.validate()?;
    let expected_mode = if strategy.wants_scalar_head() {
        HeadMode::Coefficient
    } else {
        HeadMode::Distribution
    };
    if model.head_mode != expected_mode {
        return Err(Error::Config(format!(
            "strategy {strategy:?} needs {expected_mode:?} head mode"
        )));
    }
    let b = batch.len();
    let rotation: Vec<usize> = (0..b).map(|i| (i + 1) % b).collect();
    let (inputs, base_q) = if strategy.uses_pairing() {
        let paired = smoothing::midpoint(batch, &rotation);
        (paired.inputs, paired.q)
    } else {
        (batch.inputs.clone(), batch.onehot.clone())
    };
    let q = match strategy {
        TargetStrategy::Uls { alpha } => smoothing::uls_target(&base_q, *alpha)?,
        TargetStrategy::MixupUls { alpha } | TargetStrategy::PlsUd { alpha } => {
            smoothing::ud_smoothing(&base_q, *alpha)?
        }
        _ => base_q,
    };
    let w = strategy.loss_weight();

    let trace = model.forward(&inputs)?;
    let (_, analytic) = loss_and_backward(model, &trace, &q, w)?;
    let fd = fd_gradients(model, &inputs, &q, w, epsilon)?;
    Ok(compare_gradients(model, &analytic, &fd, tolerance))
}
