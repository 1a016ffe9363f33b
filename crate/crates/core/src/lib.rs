//! Training lab for pairwise label smoothing and its baselines.
//!
//! The crate implements, end to end and in plain Rust:
//!
//! - a minimal dense matrix substrate ([`tensor`]),
//! - a dual-head MLP classifier with hand-derived backprop and SGD-momentum
//!   ([`nn`]): a shared trunk feeding a logit head and a smoothing head,
//! - every soft-target construction strategy under study ([`smoothing`]):
//!   one-hot baseline, uniform label smoothing, Mixup, midpoint pairing, and
//!   pairwise label smoothing with a learned smoothing distribution plus its
//!   ablation variants,
//! - dataset generation, IDX parsing, splits and mini-batching ([`data`]),
//! - the alternating original/midpoint training loop ([`train`]),
//! - measurement: error rate, winning-score histograms, 15-bin expected
//!   calibration error, temperature scaling and out-of-distribution
//!   confidence reports ([`eval`]).
//!
//! Everything is seeded and deterministic: a single seed fans out into named
//! [`rng`] streams so that two runs with the same configuration produce
//! bit-identical logs.

pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod smoothing;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Matrix;
