//! Dataset acquisition and batching.
//!
//! Two sources are supported: a seeded synthetic Gaussian-blob generator (the
//! desk-scale workhorse) and IDX-format image/label files (see [`idx`]).
//! Splitting and per-epoch batch shuffling are deterministic functions of the
//! experiment seed, so every run is reproducible from its config alone.

pub mod idx;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream_rng};
use crate::tensor::Matrix;

/// A labelled set of input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(Error::Consistency(format!(
                "{} inputs vs {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// New dataset containing the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }

    /// One-hot rows for the labels at the given indices.
    pub fn onehot(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.num_classes);
        for (r, &i) in indices.iter().enumerate() {
            m.set(r, self.labels[i], 1.0);
        }
        m
    }
}

/// One training/eval step worth of inputs and exact one-hot targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub onehot: Matrix,
}

impl Batch {
    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Batch {
        Batch {
            inputs: ds.inputs.select_rows(indices),
            onehot: ds.onehot(indices),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Seeded Gaussian clusters: `num_classes` centers drawn from
/// N(0, center_spread²) per coordinate, points from N(center, noise_sigma²).
/// `center_shift` displaces every center by a constant along all coordinates,
/// which is how the shifted-blobs OOD sets are produced without disturbing
/// the draw sequence.
pub fn gen_blobs(
    seed: u64,
    num_classes: usize,
    per_class: usize,
    dim: usize,
    center_spread: f64,
    noise_sigma: f64,
    center_shift: f64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::Config(format!("blobs need at least 2 classes, got {num_classes}")));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::Config("per_class and dim must be positive".into()));
    }
    if center_spread < 0.0 || noise_sigma < 0.0 {
        return Err(Error::Config("spread and sigma must be non-negative".into()));
    }
    let mut rng = stream_rng(seed, rng::STREAM_DATASET);
    let mut centers = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let c: Vec<f64> = (0..dim)
            .map(|_| center_shift + center_spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        centers.push(c);
    }
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                data.push(c + noise_sigma * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(class);
        }
    }
    Dataset::new("blobs", Matrix::new(n, dim, data)?, labels, num_classes)
}

/// Unlabelled noise inputs (labels all zero, single nominal class); used as an
/// out-of-distribution probe for confidence reports.
pub fn gen_uniform_noise(seed: u64, count: usize, dim: usize, low: f64, high: f64) -> Result<Dataset> {
    if count == 0 || dim == 0 {
        return Err(Error::Config("count and dim must be positive".into()));
    }
    if !(low < high) {
        return Err(Error::Config(format!("need low < high, got [{low}, {high})")));
    }
    let mut rng = stream_rng(seed, rng::STREAM_DATASET);
    let data = (0..count * dim).map(|_| rng.gen_range(low..high)).collect();
    Dataset::new("uniform-noise", Matrix::new(count, dim, data)?, vec![0; count], 1)
}

/// Deterministic shuffled split into `fractions.len()` disjoint parts.
/// All but the last part get floor(n·fraction) rows; the last takes the rest.
pub fn split(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(Error::Config("split needs at least one fraction".into()));
    }
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
        return Err(Error::Config("split fractions must lie in [0,1]".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions must sum to 1, got {total}")));
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    indices.shuffle(&mut stream_rng(seed, rng::STREAM_SPLIT));
    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, &f) in fractions.iter().enumerate() {
        let take = if i + 1 == fractions.len() {
            ds.len() - start
        } else {
            (ds.len() as f64 * f).floor() as usize
        };
        parts.push(ds.select(&indices[start..start + take]));
        start += take;
    }
    Ok(parts)
}

/// Mini-batch iterator over one epoch. The visit order is a fresh shuffle
/// keyed by (seed, epoch); the final short batch is kept.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

pub fn batches(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut stream_rng(seed, rng::STREAM_BATCH_BASE + epoch));
    Ok(BatchIter {
        ds,
        order,
        batch_size,
        cursor: 0,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = Batch::from_dataset(self.ds, &self.order[self.cursor..end]);
        self.cursor = end;
        Some(batch)
    }
}

/// Per-dimension affine normalizer fitted on training data. Dimensions with
/// (numerically) zero variance are passed through unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Result<Standardizer> {
        if ds.is_empty() {
            return Err(Error::Contract("cannot fit a standardizer on an empty dataset".into()));
        }
        let (n, d) = (ds.len() as f64, ds.dim());
        let mut mean = vec![0.0; d];
        for r in 0..ds.len() {
            for (m, &v) in mean.iter_mut().zip(ds.inputs.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for r in 0..ds.len() {
            for ((s, &v), &m) in var.iter_mut().zip(ds.inputs.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::dimension(
                "standardize",
                format!("{} dims", self.mean.len()),
                format!("{} dims", ds.dim()),
            ));
        }
        let mut out = ds.inputs.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(Dataset {
            inputs: out,
            labels: ds.labels.clone(),
            num_classes: ds.num_classes,
            name: ds.name.clone(),
        })
    }
}

/// Declarative dataset source for experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        num_classes: usize,
        per_class: usize,
        dim: usize,
        center_spread: f64,
        noise_sigma: f64,
        #[serde(default)]
        center_shift: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `limit` samples (subset training).
        #[serde(default)]
        limit: Option<usize>,
    },
    UniformNoise {
        count: usize,
        dim: usize,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Materializes a config block. The seed is the experiment seed; IDX loading
/// ignores it (files are already fixed).
pub fn load(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    match config {
        DatasetConfig::Blobs {
            num_classes,
            per_class,
            dim,
            center_spread,
            noise_sigma,
            center_shift,
        } => gen_blobs(seed, *num_classes, *per_class, *dim, *center_spread, *noise_sigma, *center_shift),
        DatasetConfig::Idx { images, labels, limit } => {
            let ds = idx::load_idx(images, labels)?;
            match limit {
                Some(n) if *n < ds.len() => {
                    let indices: Vec<usize> = (0..*n).collect();
                    Ok(ds.select(&indices))
                }
                _ => Ok(ds),
            }
        }
        DatasetConfig::UniformNoise { count, dim, low, high } => {
            gen_uniform_noise(seed, *count, *dim, *low, *high)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn tiny() -> Dataset {
        gen_blobs(5, 3, 4, 2, 1.0, 0.1, 0.0).unwrap()
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = gen_blobs(7, 3, 10, 4, 1.0, 0.3, 0.0).unwrap();
        let b = gen_blobs(7, 3, 10, 4, 1.0, 0.3, 0.0).unwrap();
        assert_eq!(a, b);
        let c = gen_blobs(8, 3, 10, 4, 1.0, 0.3, 0.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blobs_zero_sigma_collapses_to_centers() {
        let ds = gen_blobs(3, 2, 5, 3, 1.0, 0.0, 0.0).unwrap();
        for class in 0..2 {
            let rows: Vec<&[f64]> = (0..ds.len())
                .filter(|&i| ds.labels[i] == class)
                .map(|i| ds.inputs.row(i))
                .collect();
            for r in &rows[1..] {
                assert_eq!(*r, rows[0]);
            }
        }
    }

    #[test]
    fn blobs_counts_and_balance() {
        let ds = gen_blobs(1, 3, 100, 5, 1.0, 0.5, 0.0).unwrap();
        assert_eq!(ds.len(), 300);
        for class in 0..3 {
            assert_eq!(ds.labels.iter().filter(|&&l| l == class).count(), 100);
        }
    }

    #[test]
    fn blobs_shift_translates_every_point() {
        let base = gen_blobs(11, 2, 3, 2, 1.0, 0.2, 0.0).unwrap();
        let moved = gen_blobs(11, 2, 3, 2, 1.0, 0.2, 5.0).unwrap();
        for (a, b) in base.inputs.data().iter().zip(moved.inputs.data()) {
            assert!((b - a - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blobs_reject_bad_sizes() {
        assert!(gen_blobs(1, 1, 10, 2, 1.0, 0.1, 0.0).is_err());
        assert!(gen_blobs(1, 3, 0, 2, 1.0, 0.1, 0.0).is_err());
        assert!(gen_blobs(1, 3, 10, 0, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let ds = gen_blobs(2, 2, 500, 3, 1.0, 0.5, 0.0).unwrap();
        let parts = split(&ds, &[0.9, 0.1], 13).unwrap();
        assert_eq!(parts[0].len(), 900);
        assert_eq!(parts[1].len(), 100);
        let rows = |d: &Dataset| -> HashSet<Vec<u64>> {
            (0..d.len())
                .map(|i| d.inputs.row(i).iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        let a = rows(&parts[0]);
        let b = rows(&parts[1]);
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 1000);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = tiny();
        assert!(split(&ds, &[0.5, 0.4], 1).is_err());
        assert!(split(&ds, &[], 1).is_err());
        assert!(split(&ds, &[1.2, -0.2], 1).is_err());
    }

    #[test]
    fn batches_partition_each_epoch() {
        let ds = tiny();
        let seen: Vec<Batch> = batches(&ds, 5, 9, 0).unwrap().collect();
        assert_eq!(seen.len(), 3);
        assert_eq!(seen[2].len(), 2);
        let total: usize = seen.iter().map(Batch::len).sum();
        assert_eq!(total, ds.len());
        let mut rows: Vec<Vec<u64>> = seen
            .iter()
            .flat_map(|b| (0..b.len()).map(|r| b.inputs.row(r).iter().map(|v| v.to_bits()).collect()))
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), ds.len());
    }

    #[test]
    fn batches_reshuffle_by_epoch_and_repeat_by_seed() {
        let ds = tiny();
        let collect = |epoch| -> Vec<Batch> { batches(&ds, 4, 21, epoch).unwrap().collect() };
        assert_eq!(collect(0), collect(0));
        assert_ne!(collect(0), collect(1));
    }

    #[test]
    fn onehot_rows_are_exact() {
        let ds = tiny();
        let batch = Batch::from_dataset(&ds, &[0, 5, 11]);
        for r in 0..3 {
            let row = batch.onehot.row(r);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), row.len() - 1);
        }
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let ds = gen_blobs(4, 2, 200, 3, 2.0, 0.7, 0.0).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        let out = st.apply(&ds).unwrap();
        for d in 0..3 {
            let col: Vec<f64> = (0..out.len()).map(|i| out.inputs.get(i, d)).collect();
            let mean: f64 = col.iter().sum::<f64>() / col.len() as f64;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-9, "var {var}");
        }
    }

    #[test]
    fn standardizer_guards_constant_dimensions() {
        let inputs = Matrix::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0]]).unwrap();
        let ds = Dataset::new("const", inputs, vec![0, 1], 2).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        assert_eq!(st.std[0], 1.0);
        let out = st.apply(&ds).unwrap();
        assert_eq!(out.inputs.get(0, 0), 0.0);
        assert_eq!(out.inputs.get(1, 0), 0.0);
    }

    #[test]
    fn dataset_validates_labels() {
        let inputs = Matrix::zeros(2, 2);
        assert!(Dataset::new("bad", inputs.clone(), vec![0, 5], 3).is_err());
        assert!(Dataset::new("bad", inputs.clone(), vec![0], 2).is_err());
        assert!(Dataset::new("bad", inputs, vec![0, 1], 0).is_err());
    }

    #[test]
    fn noise_dataset_has_requested_shape() {
        let ds = gen_uniform_noise(6, 20, 4, 0.0, 1.0).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.dim(), 4);
        assert!(ds.inputs.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let bad = r#"{"kind": "blobs", "num_classes": 2, "per_class": 3, "dim": 2,
                      "center_spread": 1.0, "noise_sigma": 0.1, "bogus": true}"#;
        assert!(serde_json::from_str::<DatasetConfig>(bad).is_err());
    }

    proptest! {
        #[test]
        fn split_sizes_always_partition(
            n in 1usize..200,
            f in 0.05f64..0.95,
            seed in 0u64..100,
        ) {
            let inputs = Matrix::filled(n, 2, 1.0);
            let ds = Dataset::new("p", inputs, vec![0; n], 1).unwrap();
            let parts = split(&ds, &[f, 1.0 - f], seed).unwrap();
            prop_assert_eq!(parts[0].len() + parts[1].len(), n);
            prop_assert_eq!(parts[0].len(), (n as f64 * f).floor() as usize);
        }

        #[test]
        fn batching_covers_every_index(
            n in 1usize..60,
            bs in 1usize..20,
            seed in 0u64..50,
            epoch in 0u64..4,
        ) {
            let inputs = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
            let ds = Dataset::new("p", inputs, vec![0; n], 1).unwrap();
            let mut seen: Vec<f64> = batches(&ds, bs, seed, epoch)
                .unwrap()
                .flat_map(|b| b.inputs.data().to_vec())
                .collect();
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<f64> = (0..n).map(|i| i as f64).collect();
            prop_assert_eq!(seen, expect);
        }
    }
}
