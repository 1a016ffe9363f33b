//! Loss and analytic gradients.
//!
//! The training objective is the batch mean of
//! (1−w)·H(q, p) + w·H(u′, p),
//! where q is the (possibly mixed) base target, p the predicted distribution
//! and u′ the learned smoothing distribution. Because cross-entropy is linear
//! in its first argument this equals H((1−w)q + w·u′, p), which is the form
//! actually computed: one effective target per row, one log-probability pass.
//!
//! Derivatives, all per row and divided by the batch size B at the end:
//!   ∂ℓ/∂z = p − ((1−w)q + w·u′)
//!   with c_k = −w·log p_k:  ∂ℓ/∂v_j = u′_j·(c_j − Σ_k u′_k c_k)
//!   ∂ℓ/∂a  = ∂ℓ/∂v ⊙ v ⊙ (1−v)            (sigmoid squashing)
//! and for the scalar-coefficient head, where the effective target is
//! (1−w·s)q + (w·s)/K:
//!   ∂ℓ/∂s = w·Σ_k (q_k − 1/K)·log p_k
//! Both heads feed the trunk through the shared embedding — there is no
//! stop-gradient: ∂ℓ/∂S = (∂ℓ/∂z)·W_l + (∂ℓ/∂a)·W_t.

use crate::error::{Error, Result};
use crate::nn::{ForwardTrace, Model, SmoothingTrace};
use crate::tensor::Matrix;

/// Parameter gradients in [`Model`] tensor-traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
}

fn check_targets(trace: &ForwardTrace, q: &Matrix, w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Config(format!("loss weight w must lie in [0,1], got {w}")));
    }
    if q.shape() != trace.probs.shape() {
        return Err(Error::dimension(
            "loss targets",
            format!("{}x{}", trace.probs.rows(), trace.probs.cols()),
            format!("{}x{}", q.rows(), q.cols()),
        ));
    }
    for r in 0..q.rows() {
        let sum: f64 = q.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::TargetDistribution(format!(
                "target row {r} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// The distribution that ends up in the first slot of the cross-entropy:
/// (1−w)q + w·u′ for the distribution head, (1−w)q + w·[(1−s)q + s/K] for the
/// coefficient head.
pub fn effective_target(trace: &ForwardTrace, q: &Matrix, w: f64) -> Result<Matrix> {
    check_targets(trace, q, w)?;
    match &trace.smoothing {
        SmoothingTrace::Distribution { dist, .. } => q.scale(1.0 - w).add(&dist.scale(w)),
        SmoothingTrace::Coefficient { coeff, .. } => {
            let k = q.cols() as f64;
            let mut out = q.clone();
            for r in 0..q.rows() {
                let sb = coeff.get(r, 0);
                for v in out.row_mut(r).iter_mut() {
                    let inner = (1.0 - sb) * *v + sb / k;
                    *v = (1.0 - w) * *v + w * inner;
                }
            }
            Ok(out)
        }
    }
}

/// Mean over rows of −Σ_k targets·log_probs.
pub fn cross_entropy_mean(targets: &Matrix, log_probs: &Matrix) -> Result<f64> {
    if targets.shape() != log_probs.shape() {
        return Err(Error::dimension(
            "cross_entropy",
            format!("{}x{}", targets.rows(), targets.cols()),
            format!("{}x{}", log_probs.rows(), log_probs.cols()),
        ));
    }
    let mut total = 0.0;
    for (t, lp) in targets.data().iter().zip(log_probs.data()) {
        total -= t * lp;
    }
    Ok(total / targets.rows() as f64)
}

/// Loss value only (used by the finite-difference harness).
pub fn compute_loss(trace: &ForwardTrace, q: &Matrix, w: f64) -> Result<f64> {
    let target = effective_target(trace, q, w)?;
    cross_entropy_mean(&target, &trace.log_probs)
}

/// Loss plus analytic gradients for every parameter tensor.
pub fn loss_and_backward(model: &Model, trace: &ForwardTrace, q: &Matrix, w: f64) -> Result<(f64, Gradients)> {
    let target = effective_target(trace, q, w)?;
    let loss = cross_entropy_mean(&target, &trace.log_probs)?;
    let batch = trace.batch_size() as f64;
    let s = trace.embedding();

    // Logit path.
    let dz = trace.probs.sub(&target)?.scale(1.0 / batch);
    let d_logit_head = dz.transpose().matmul(s)?;
    let mut d_embed = dz.matmul(&model.logit_head)?;

    // Smoothing path. With w = 0 the loss does not involve the head at all,
    // so its gradient is identically zero and the work can be skipped.
    let d_smoothing_head = if w == 0.0 {
        let h = &model.smoothing_head;
        Matrix::zeros(h.rows(), h.cols())
    } else {
        let da = match &trace.smoothing {
            SmoothingTrace::Distribution { squashed, dist, .. } => {
                let mut dv = Matrix::zeros(dist.rows(), dist.cols());
                for r in 0..dist.rows() {
                    let u = dist.row(r);
                    let lp = trace.log_probs.row(r);
                    // c_k = −w·log p_k; weighted = Σ_k u_k c_k.
                    let weighted: f64 = u.iter().zip(lp).map(|(uk, lpk)| uk * (-w * lpk)).sum();
                    for (c, out) in dv.row_mut(r).iter_mut().enumerate() {
                        *out = u[c] * ((-w * lp[c]) - weighted) / batch;
                    }
                }
                let one_minus_v = squashed.map(|x| 1.0 - x);
                dv.hadamard(squashed)?.hadamard(&one_minus_v)?
            }
            SmoothingTrace::Coefficient { coeff, .. } => {
                let k = q.cols() as f64;
                let mut ds = Matrix::zeros(coeff.rows(), 1);
                for r in 0..q.rows() {
                    let grad: f64 = q
                        .row(r)
                        .iter()
                        .zip(trace.log_probs.row(r))
                        .map(|(qk, lpk)| (qk - 1.0 / k) * lpk)
                        .sum();
                    ds.set(r, 0, w * grad / batch);
                }
                let one_minus_s = coeff.map(|x| 1.0 - x);
                ds.hadamard(coeff)?.hadamard(&one_minus_s)?
            }
        };
        d_embed = d_embed.add(&da.matmul(&model.smoothing_head)?)?;
        da.transpose().matmul(s)?
    };

    // Trunk backprop, last layer to first.
    let mut trunk_grads: Vec<(Matrix, Matrix)> = Vec::with_capacity(model.trunk.len());
    let mut d_act = d_embed;
    for i in (0..model.trunk.len()).rev() {
        let mask = trace.pres[i].map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let d_pre = d_act.hadamard(&mask)?;
        let input_act = if i == 0 { &trace.inputs } else { &trace.acts[i - 1] };
        let d_weight = d_pre.transpose().matmul(input_act)?;
        let d_bias = d_pre.transpose().row_sum();
        if i > 0 {
            d_act = d_pre.matmul(&model.trunk[i].weight)?;
        }
        trunk_grads.push((d_weight, d_bias));
    }
    trunk_grads.reverse();

    let mut tensors = Vec::with_capacity(model.num_tensors());
    for (dw, db) in trunk_grads {
        tensors.push(dw);
        tensors.push(db);
    }
    tensors.push(d_logit_head);
    tensors.push(d_smoothing_head);
    Ok((loss, Gradients { tensors }))
}
