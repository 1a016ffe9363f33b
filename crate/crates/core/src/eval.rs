//! Measurement machinery: error rate, winning-score histograms, expected
//! calibration error, temperature-scaling search, training-signal statistics
//! and out-of-distribution confidence reports.
//!
//! Temperature scaling follows the multiplicative convention: probabilities
//! are softmax(t·z). Any t > 0 preserves the per-row argmax, so scaling can
//! never change the error rate — only the confidence dispersion.

use std::io::Write;

use serde::Serialize;

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::nn::{HeadMode, Model};
use crate::rng::{self, stream_rng};
use crate::smoothing::{self, TargetStrategy};
use crate::tensor::Matrix;

/// One equal-width confidence bin of the calibration analysis. Empty bins
/// keep zero statistics and contribute nothing to the ECE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// Histogram of winning softmax scores plus its summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub bin_width: f64,
    /// Scores below this floor are dropped before binning.
    pub min_score: f64,
    pub counts: Vec<usize>,
    /// None when the floor removed every score.
    pub median: Option<f64>,
    /// Fraction of retained scores strictly above 0.9.
    pub frac_above_0_9: f64,
    pub retained: usize,
    pub total: usize,
}

/// Mean training-target masses over freshly built midpoint rows with two
/// distinct true labels.
#[derive(Debug, Clone, Serialize)]
pub struct SignalStats {
    /// Mean target mass each class receives when it is one of the pair's
    /// ground-truth labels (zero where the class never appeared).
    pub per_class_gt_mean: Vec<f64>,
    pub per_class_gt_count: Vec<usize>,
    /// Rank-wise means of the largest non-ground-truth masses per row
    /// (up to five entries).
    pub top_non_gt_mean: Vec<f64>,
    /// Mean target row; sums to 1.
    pub mean_row: Vec<f64>,
    pub rows_used: usize,
}

/// Aggregate evaluation of one model on one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub error_rate: f64,
    pub winning_scores: Vec<f64>,
    pub histogram: HistogramReport,
    pub ece: f64,
    pub ece_bins: Vec<CalibrationBin>,
    /// The scaling factor applied for the post-TS numbers, when one was used.
    pub temperature: Option<f64>,
    pub ece_after_temperature: Option<f64>,
    pub median_winning_score: Option<f64>,
    pub frac_above_0_9: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ece_bins: usize,
    pub hist_bin_width: f64,
    pub hist_min_score: f64,
    pub temperature: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ece_bins: 15,
            hist_bin_width: 0.05,
            hist_min_score: 0.0,
            temperature: None,
        }
    }
}

/// The default search grid 0.05, 0.10, …, 2.00.
pub fn default_temperature_grid() -> Vec<f64> {
    (1..=40).map(|i| i as f64 * 0.05).collect()
}

fn forward_logits(model: &Model, ds: &Dataset) -> Result<Matrix> {
    Ok(model.forward(&ds.inputs)?.logits)
}

fn row_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn confidences_from_logits(logits: &Matrix, labels: &[usize], temperature: f64) -> (Vec<f64>, Vec<bool>) {
    let probs = logits.scale(temperature).softmax_rows();
    let mut conf = Vec::with_capacity(probs.rows());
    let mut correct = Vec::with_capacity(probs.rows());
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let pred = row_argmax(row);
        conf.push(row[pred]);
        correct.push(pred == labels[r]);
    }
    (conf, correct)
}

/// Per-sample winning softmax score and correctness, at the given
/// temperature (1.0 for the raw model).
pub fn confidences_and_correct(model: &Model, ds: &Dataset, temperature: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let logits = forward_logits(model, ds)?;
    Ok(confidences_from_logits(&logits, &ds.labels, temperature))
}

/// Fraction of samples whose argmax prediction differs from the label.
/// Argmax ties go to the lowest class index.
pub fn error_rate(model: &Model, ds: &Dataset) -> Result<f64> {
    let (_, correct) = confidences_and_correct(model, ds, 1.0)?;
    let wrong = correct.iter().filter(|&&c| !c).count();
    Ok(wrong as f64 / correct.len() as f64)
}

/// Expected calibration error over equal-width bins of [0,1]. A confidence c
/// lands in bin floor(c·num_bins), clamped so c = 1 joins the last bin.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<(f64, Vec<CalibrationBin>)> {
    if confidences.len() != correct.len() {
        return Err(Error::Contract(format!(
            "{} confidences vs {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if confidences.is_empty() {
        return Err(Error::Contract("ece needs at least one sample".into()));
    }
    if num_bins == 0 {
        return Err(Error::Config("num_bins must be positive".into()));
    }
    if confidences.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::Contract("confidences must lie in [0,1]".into()));
    }
    let mut counts = vec![0usize; num_bins];
    let mut conf_sums = vec![0.0; num_bins];
    let mut hit_counts = vec![0usize; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let idx = ((c * num_bins as f64).floor() as usize).min(num_bins - 1);
        counts[idx] += 1;
        conf_sums[idx] += c;
        hit_counts[idx] += ok as usize;
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    let mut bins = Vec::with_capacity(num_bins);
    for i in 0..num_bins {
        let (mean_confidence, accuracy) = if counts[i] > 0 {
            (conf_sums[i] / counts[i] as f64, hit_counts[i] as f64 / counts[i] as f64)
        } else {
            (0.0, 0.0)
        };
        total += counts[i] as f64 / n * (accuracy - mean_confidence).abs();
        bins.push(CalibrationBin {
            lower: i as f64 / num_bins as f64,
            upper: (i + 1) as f64 / num_bins as f64,
            count: counts[i],
            mean_confidence,
            accuracy,
        });
    }
    Ok((total, bins))
}

/// Grid search for the scaling factor minimizing calibration-split ECE.
/// Ties resolve to the smallest factor.
pub fn temperature_search(model: &Model, calibration: &Dataset, grid: &[f64], num_bins: usize) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Config("temperatures must be positive".into()));
    }
    let logits = forward_logits(model, calibration)?;
    let mut best: Option<(f64, f64)> = None;
    for &t in grid {
        let (conf, correct) = confidences_from_logits(&logits, &calibration.labels, t);
        let (e, _) = ece(&conf, &correct, num_bins)?;
        let better = match best {
            None => true,
            Some((be, bt)) => e < be || (e == be && t < bt),
        };
        if better {
            best = Some((e, t));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// Winning score per sample: the maximum softmax component.
pub fn winning_scores(model: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    Ok(confidences_and_correct(model, ds, 1.0)?.0)
}

/// Bins a score list into fixed-width bins over [0,1], dropping scores below
/// the floor first.
pub fn score_histogram(scores: &[f64], bin_width: f64, min_score: f64) -> Result<HistogramReport> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::Config(format!("bin_width must lie in (0,1], got {bin_width}")));
    }
    let num_bins = (1.0 / bin_width).round() as usize;
    if num_bins == 0 || (num_bins as f64 * bin_width - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("bin_width {bin_width} does not divide 1 evenly")));
    }
    if !(0.0..=1.0).contains(&min_score) {
        return Err(Error::Config(format!("min_score must lie in [0,1], got {min_score}")));
    }
    let mut counts = vec![0usize; num_bins];
    let mut retained: Vec<f64> = Vec::with_capacity(scores.len());
    for &s in scores {
        if s < min_score {
            continue;
        }
        let idx = ((s / bin_width).floor() as usize).min(num_bins - 1);
        counts[idx] += 1;
        retained.push(s);
    }
    retained.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = match retained.len() {
        0 => None,
        n if n % 2 == 1 => Some(retained[n / 2]),
        n => Some((retained[n / 2 - 1] + retained[n / 2]) / 2.0),
    };
    let frac_above_0_9 = if retained.is_empty() {
        0.0
    } else {
        retained.iter().filter(|&&s| s > 0.9).count() as f64 / retained.len() as f64
    };
    Ok(HistogramReport {
        bin_width,
        min_score,
        counts,
        median,
        frac_above_0_9,
        retained: retained.len(),
        total: scores.len(),
    })
}

pub fn winning_score_histogram(model: &Model, ds: &Dataset, bin_width: f64, min_score: f64) -> Result<HistogramReport> {
    let scores = winning_scores(model, ds)?;
    score_histogram(&scores, bin_width, min_score)
}

/// Confidence-only report on out-of-distribution inputs (labels ignored).
pub fn ood_report(model: &Model, ds: &Dataset, bin_width: f64, min_score: f64) -> Result<HistogramReport> {
    if ds.dim() != model.input_dim() {
        return Err(Error::Config(format!(
            "OOD inputs have dimension {} but the model expects {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    winning_score_histogram(model, ds, bin_width, min_score)
}

/// Builds fresh midpoint targets over the dataset (pairing drawn from the
/// seed), keeps only pairs with two distinct true labels, and reports the
/// mean target masses: per ground-truth class and for the largest
/// non-ground-truth entries.
pub fn training_signal_stats(
    model: &Model,
    ds: &Dataset,
    strategy: &TargetStrategy,
    seed: u64,
) -> Result<SignalStats> {
    if !strategy.is_pls_variant() {
        return Err(Error::Config(format!(
            "training-signal statistics are defined for PLS variants, not {strategy:?}"
        )));
    }
    strategy.validate()?;
    if ds.num_classes < 2 {
        return Err(Error::Config("need at least 2 classes for distinct pairs".into()));
    }
    let needed_mode = if strategy.wants_scalar_head() {
        HeadMode::Coefficient
    } else {
        HeadMode::Distribution
    };
    let needs_forward = matches!(strategy, TargetStrategy::Pls { .. } | TargetStrategy::PlsCoeff { .. });
    if needs_forward && model.head_mode != needed_mode {
        return Err(Error::Config(format!(
            "strategy {strategy:?} needs a model in {needed_mode:?} head mode"
        )));
    }

    let all: Vec<usize> = (0..ds.len()).collect();
    let batch = Batch::from_dataset(ds, &all);
    let mut pair_rng = stream_rng(seed, rng::STREAM_SIGNAL_STATS);
    let perm = smoothing::random_permutation(ds.len(), &mut pair_rng);
    let paired = smoothing::midpoint(&batch, &perm);

    let distinct: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] != ds.labels[perm[i]])
        .collect();
    if distinct.is_empty() {
        return Err(Error::Contract("no sample pairs with distinct labels were drawn".into()));
    }
    let inputs = paired.inputs.select_rows(&distinct);
    let q = paired.q.select_rows(&distinct);

    let targets = match strategy {
        TargetStrategy::Pls { w } => {
            let trace = model.forward(&inputs)?;
            let u = trace.smoothing_dist().expect("distribution head checked above");
            smoothing::pls_target(&q, u, *w)?
        }
        TargetStrategy::PlsCoeff { w } => {
            let trace = model.forward(&inputs)?;
            let s = trace.smoothing_coeff().expect("coefficient head checked above");
            smoothing::coeff_smoothing(&q, s, *w)?
        }
        TargetStrategy::PlsUd { alpha } => smoothing::ud_smoothing(&q, *alpha)?,
        TargetStrategy::PlsNoLearned => q.clone(),
        _ => unreachable!("non-PLS strategies rejected above"),
    };

    let k = ds.num_classes;
    let mut gt_sums = vec![0.0; k];
    let mut gt_counts = vec![0usize; k];
    let top_len = 5.min(k.saturating_sub(2));
    let mut top_sums = vec![0.0; top_len];
    let mut row_sums = vec![0.0; k];
    for (row_idx, &orig) in distinct.iter().enumerate() {
        let (a, b) = (ds.labels[orig], ds.labels[perm[orig]]);
        let row = targets.row(row_idx);
        gt_sums[a] += row[a];
        gt_counts[a] += 1;
        gt_sums[b] += row[b];
        gt_counts[b] += 1;
        let mut rest: Vec<f64> = (0..k).filter(|&c| c != a && c != b).map(|c| row[c]).collect();
        rest.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (slot, &v) in top_sums.iter_mut().zip(&rest) {
            *slot += v;
        }
        for (s, &v) in row_sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let rows_used = distinct.len();
    let per_class_gt_mean = gt_sums
        .iter()
        .zip(&gt_counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(SignalStats {
        per_class_gt_mean,
        per_class_gt_count: gt_counts,
        top_non_gt_mean: top_sums.iter().map(|s| s / rows_used as f64).collect(),
        mean_row: row_sums.iter().map(|s| s / rows_used as f64).collect(),
        rows_used,
    })
}

/// Full evaluation used by the CLI: error, histogram, ECE, and optionally the
/// calibration numbers after temperature scaling.
pub fn evaluate(model: &Model, ds: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let (conf, correct) = confidences_and_correct(model, ds, 1.0)?;
    let wrong = correct.iter().filter(|&&c| !c).count();
    let (ece_value, ece_bins) = ece(&conf, &correct, opts.ece_bins)?;
    let histogram = score_histogram(&conf, opts.hist_bin_width, opts.hist_min_score)?;
    let ece_after_temperature = match opts.temperature {
        Some(t) => {
            let (tc, tk) = confidences_and_correct(model, ds, t)?;
            Some(ece(&tc, &tk, opts.ece_bins)?.0)
        }
        None => None,
    };
    Ok(EvalReport {
        error_rate: wrong as f64 / correct.len() as f64,
        median_winning_score: histogram.median,
        frac_above_0_9: histogram.frac_above_0_9,
        winning_scores: conf,
        histogram,
        ece: ece_value,
        ece_bins,
        temperature: opts.temperature,
        ece_after_temperature,
    })
}

/// CSV rows `bin_lower,bin_upper,count`.
pub fn write_histogram_csv(mut out: impl Write, report: &HistogramReport) -> Result<()> {
    writeln!(out, "bin_lower,bin_upper,count")?;
    for (i, &count) in report.counts.iter().enumerate() {
        let lower = i as f64 * report.bin_width;
        let upper = (i + 1) as f64 * report.bin_width;
        writeln!(out, "{lower},{upper},{count}")?;
    }
    Ok(())
}

/// CSV rows `lower,upper,count,confidence,accuracy`.
pub fn write_ece_csv(mut out: impl Write, bins: &[CalibrationBin]) -> Result<()> {
    writeln!(out, "lower,upper,count,confidence,accuracy")?;
    for b in bins {
        writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.count, b.mean_confidence, b.accuracy)?;
    }
    Ok(())
}
