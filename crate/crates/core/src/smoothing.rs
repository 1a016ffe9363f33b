//! Target-construction algebra.
//!
//! Every training strategy reduces to "which distribution sits in the first
//! slot of the cross-entropy, and how strongly does the learned smoothing
//! head participate". The functions here are pure: they turn raw batches and
//! (optionally) head outputs into soft-target rows, and nothing else.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Declarative description of how training targets are built.
///
/// `w` is the mixing weight between the base target and the learned smoothing
/// distribution (0.5 unless overridden); `alpha` is the fixed uniform
/// smoothing coefficient of the ULS-style strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetStrategy {
    /// Plain cross-entropy on one-hot labels.
    Baseline,
    /// Uniform label smoothing of the one-hot targets.
    Uls { alpha: f64 },
    /// Pairwise interpolation with a fresh uniform coefficient per mini-batch.
    Mixup,
    /// Mixup followed by uniform smoothing of the mixed labels.
    MixupUls { alpha: f64 },
    /// Midpoint pairs plus the learned smoothing distribution.
    Pls {
        #[serde(default = "default_w")]
        w: f64,
    },
    /// Ablation: the learned distribution replaced by a fixed uniform one.
    PlsUd { alpha: f64 },
    /// Ablation: the smoothing head predicts a scalar coefficient instead of
    /// a full distribution.
    PlsCoeff {
        #[serde(default = "default_w")]
        w: f64,
    },
    /// Ablation: midpoint training with the learned term dropped entirely.
    PlsNoLearned,
}

fn default_w() -> f64 {
    0.5
}

impl TargetStrategy {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        match self {
            TargetStrategy::Baseline | TargetStrategy::Mixup | TargetStrategy::PlsNoLearned => Ok(()),
            TargetStrategy::Uls { alpha }
            | TargetStrategy::MixupUls { alpha }
            | TargetStrategy::PlsUd { alpha } => check("alpha", *alpha),
            TargetStrategy::Pls { w } | TargetStrategy::PlsCoeff { w } => check("w", *w),
        }
    }

    /// Weight of the learned-head term in the loss. Zero for everything that
    /// does not train the smoothing head.
    pub fn loss_weight(&self) -> f64 {
        match self {
            TargetStrategy::Pls { w } | TargetStrategy::PlsCoeff { w } => *w,
            _ => 0.0,
        }
    }

    /// Whether this strategy builds inputs by pairing samples within the
    /// mini-batch (and therefore needs batches of at least two).
    pub fn uses_pairing(&self) -> bool {
        !matches!(self, TargetStrategy::Baseline | TargetStrategy::Uls { .. })
    }

    /// Whether the original/midpoint step alternation applies (the PLS family
    /// trains on both; Mixup-style strategies mix every step).
    pub fn is_pls_variant(&self) -> bool {
        matches!(
            self,
            TargetStrategy::Pls { .. }
                | TargetStrategy::PlsUd { .. }
                | TargetStrategy::PlsCoeff { .. }
                | TargetStrategy::PlsNoLearned
        )
    }

    /// Whether the model's smoothing head must be the scalar-coefficient one.
    pub fn wants_scalar_head(&self) -> bool {
        matches!(self, TargetStrategy::PlsCoeff { .. })
    }
}

/// A batch whose inputs are convex combinations of sample pairs, together
/// with the matching mixed labels and the pairing used.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    pub inputs: Matrix,
    pub q: Matrix,
    pub perm: Vec<usize>,
}

fn debug_check_perm(perm: &[usize], len: usize) {
    debug_assert_eq!(perm.len(), len, "pairing permutation length mismatch");
    #[cfg(debug_assertions)]
    {
        let mut seen = vec![false; len];
        for &i in perm {
            assert!(i < len && !seen[i], "pairing is not a permutation");
            seen[i] = true;
        }
    }
}

/// Uniform random permutation for in-batch pairing.
pub fn random_permutation(len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(rng);
    perm
}

/// Midpoint pairs: element-wise average of each sample with its partner, and
/// of their one-hot labels.
pub fn midpoint(batch: &Batch, perm: &[usize]) -> PairedBatch {
    debug_check_perm(perm, batch.len());
    let half = |a: &Matrix| {
        let mut out = a.clone();
        for r in 0..a.rows() {
            let partner = a.row(perm[r]).to_vec();
            for (v, p) in out.row_mut(r).iter_mut().zip(partner) {
                *v = (*v + p) / 2.0;
            }
        }
        out
    };
    PairedBatch {
        inputs: half(&batch.inputs),
        q: half(&batch.onehot),
        perm: perm.to_vec(),
    }
}

/// Mixup pairs: x = λ·x_i + (1−λ)·x_j and likewise for the labels. The caller
/// draws λ (once per mini-batch).
pub fn mixup(batch: &Batch, perm: &[usize], lambda: f64) -> PairedBatch {
    debug_check_perm(perm, batch.len());
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0,1]");
    let mix = |a: &Matrix| {
        let mut out = a.clone();
        for r in 0..a.rows() {
            let partner = a.row(perm[r]).to_vec();
            let row = out.row_mut(r);
            for (v, p) in row.iter_mut().zip(partner) {
                *v = lambda * *v + (1.0 - lambda) * p;
            }
        }
        out
    };
    PairedBatch {
        inputs: mix(&batch.inputs),
        q: mix(&batch.onehot),
        perm: perm.to_vec(),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in [0,1], got {alpha}")))
    }
}

fn check_rows_sum_to_one(name: &str, m: &Matrix, tol: f64) -> Result<()> {
    for r in 0..m.rows() {
        let sum: f64 = m.row(r).iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::TargetDistribution(format!(
                "{name} row {r} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Shared affine map toward the uniform distribution:
/// (1−coef)·row + coef·(1/K).
fn toward_uniform(q: &Matrix, coef: f64) -> Matrix {
    let k = q.cols() as f64;
    q.map(|v| (1.0 - coef) * v + coef / k)
}

/// Uniform label smoothing of one-hot rows: (1−α)·onehot + α·(1/K).
pub fn uls_target(onehot: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    debug_assert!(
        (0..onehot.rows()).all(|r| {
            onehot.row(r).iter().filter(|&&v| v == 1.0).count() == 1
                && onehot.row(r).iter().all(|&v| v == 0.0 || v == 1.0)
        }),
        "uls_target expects exact one-hot rows"
    );
    Ok(toward_uniform(onehot, alpha))
}

/// PLS target rows: (1−w)·q + w·u′ per row.
pub fn pls_target(q: &Matrix, u_prime: &Matrix, w: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Config(format!("w must lie in [0,1], got {w}")));
    }
    if q.shape() != u_prime.shape() {
        return Err(Error::dimension(
            "pls_target",
            format!("{}x{}", q.rows(), q.cols()),
            format!("{}x{}", u_prime.rows(), u_prime.cols()),
        ));
    }
    check_rows_sum_to_one("q", q, 1e-9)?;
    check_rows_sum_to_one("u_prime", u_prime, 1e-9)?;
    let mixed = q.scale(1.0 - w).add(&u_prime.scale(w))?;
    Ok(mixed)
}

/// Uniform-distribution ablation: (1−α)·q + α·(1/K) on (typically midpoint) q.
pub fn ud_smoothing(q: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    check_rows_sum_to_one("q", q, 1e-9)?;
    Ok(toward_uniform(q, alpha))
}

/// Coefficient-head ablation: the scalar s_b interpolates each row toward
/// uniform before the usual w-mix, i.e.
/// (1−w)·q + w·[(1−s_b)·q + s_b·(1/K)].
pub fn coeff_smoothing(q: &Matrix, s: &Matrix, w: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Config(format!("w must lie in [0,1], got {w}")));
    }
    if s.rows() != q.rows() || s.cols() != 1 {
        return Err(Error::dimension(
            "coeff_smoothing",
            format!("{}x{}", q.rows(), q.cols()),
            format!("{}x{}", s.rows(), s.cols()),
        ));
    }
    if s.data().iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Contract("smoothing coefficients must lie in (0,1)".into()));
    }
    check_rows_sum_to_one("q", q, 1e-9)?;
    let k = q.cols() as f64;
    let mut out = q.clone();
    for r in 0..q.rows() {
        let sb = s.get(r, 0);
        let row = out.row_mut(r);
        for v in row.iter_mut() {
            let inner = (1.0 - sb) * *v + sb / k;
            *v = (1.0 - w) * *v + w * inner;
        }
    }
    Ok(out)
}
