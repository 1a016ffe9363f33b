//! Subcommand implementations. Artifacts are written only after the whole
//! pipeline for a command has succeeded, so a failing invocation leaves no
//! partial outputs behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use plslab_core::data::{self, Batch, Dataset, Standardizer};
use plslab_core::eval::{self, EvalReport};
use plslab_core::nn::{self, gradient_check, HeadMode, Model, ModelConfig};
use plslab_core::rng::{stream_rng, STREAM_INIT};
use plslab_core::smoothing::TargetStrategy;
use plslab_core::train::train;
use plslab_core::Matrix;

use crate::config::{load_config, ExperimentConfig};
use crate::failure::{runtime, usage, CliResult};
use crate::Axis;

/// Provenance wrapper for JSON artifacts: the config hash and seed come
/// first, then the report's own fields.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn provenance_line(out: &mut impl Write, hash: &str, seed: u64) -> std::io::Result<()> {
    writeln!(out, "# config_hash={hash} seed={seed}")
}

struct PreparedData {
    train: Dataset,
    val: Dataset,
    test: Dataset,
    standardizer: Option<Standardizer>,
}

fn prepare_data(cfg: &ExperimentConfig) -> CliResult<PreparedData> {
    let full = data::load(&cfg.dataset, cfg.seed)?;
    let mut parts = data::split(&full, &cfg.split.fractions(), cfg.seed)?;
    let test = parts.pop().expect("three fractions");
    let val = parts.pop().expect("three fractions");
    let train = parts.pop().expect("three fractions");
    if cfg.standardize {
        let standardizer = Standardizer::fit(&train)?;
        Ok(PreparedData {
            train: standardizer.apply(&train)?,
            val: standardizer.apply(&val)?,
            test: standardizer.apply(&test)?,
            standardizer: Some(standardizer),
        })
    } else {
        Ok(PreparedData {
            train,
            val,
            test,
            standardizer: None,
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value).map_err(runtime)?;
    Ok(())
}

/// Trains per the config and writes checkpoint.json, runlog.csv and
/// report.json into `out_dir`. Shared between `train` and each sweep value.
fn run_experiment(cfg: &ExperimentConfig, hash: &str, out_dir: &Path) -> CliResult<EvalReport> {
    let prepared = prepare_data(cfg)?;
    let (model, log) = train(&cfg.train, &cfg.model, &prepared.train, Some(&prepared.val))?;
    let report = eval::evaluate(&model, &prepared.test, &cfg.eval.options(None))?;

    fs::create_dir_all(out_dir)?;
    nn::save_checkpoint(
        &out_dir.join("checkpoint.json"),
        &model,
        prepared.standardizer.as_ref(),
        Some(hash.to_string()),
        Some(cfg.seed),
    )?;
    let mut runlog = BufWriter::new(File::create(out_dir.join("runlog.csv"))?);
    provenance_line(&mut runlog, hash, cfg.seed)?;
    log.write_csv(&mut runlog)?;
    runlog.flush()?;
    write_json(
        &out_dir.join("report.json"),
        &Stamped {
            config_hash: hash,
            seed: cfg.seed,
            body: &report,
        },
    )?;
    Ok(report)
}

pub fn cmd_train(config_path: &Path, out_dir: &Path) -> CliResult<()> {
    let (cfg, hash) = load_config(config_path)?;
    let report = run_experiment(&cfg, &hash, out_dir)?;
    println!(
        "run {hash} seed {}: test error {:.4}, ece {:.4}, median winning score {}",
        cfg.seed,
        report.error_rate,
        report.ece,
        report
            .median_winning_score
            .map_or_else(|| "n/a".to_string(), |m| format!("{m:.3}")),
    );
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

pub struct EvalFlags {
    pub ece: bool,
    pub hist: bool,
    pub temperature: bool,
    pub ood: bool,
}

#[derive(Serialize)]
struct OodSummary {
    median: Option<f64>,
    frac_above_0_9: f64,
    retained: usize,
    total: usize,
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ood: Option<OodSummary>,
}

pub fn cmd_eval(checkpoint: &Path, config_path: &Path, out_dir: &Path, flags: EvalFlags) -> CliResult<()> {
    let (cfg, hash) = load_config(config_path)?;
    let (model, standardizer) = nn::load_checkpoint(checkpoint)?;

    let full = data::load(&cfg.dataset, cfg.seed)?;
    let mut parts = data::split(&full, &cfg.split.fractions(), cfg.seed)?;
    let mut test = parts.pop().expect("three fractions");
    let mut val = parts.pop().expect("three fractions");
    if let Some(s) = &standardizer {
        test = s.apply(&test)?;
        val = s.apply(&val)?;
    }
    if test.dim() != model.input_dim() {
        return Err(usage(format!(
            "checkpoint expects {}-dimensional inputs but the dataset has {}",
            model.input_dim(),
            test.dim()
        )));
    }

    let temperature = if flags.temperature {
        Some(eval::temperature_search(&model, &val, &cfg.eval.grid()?, cfg.eval.ece_bins)?)
    } else {
        None
    };
    let report = eval::evaluate(&model, &test, &cfg.eval.options(temperature))?;

    let ood = if flags.ood {
        let ood_cfg = cfg
            .eval
            .ood
            .as_ref()
            .ok_or_else(|| usage("--ood requires an eval.ood dataset block in the config"))?;
        let mut ood_ds = data::load(ood_cfg, cfg.seed)?;
        if let Some(s) = &standardizer {
            ood_ds = s.apply(&ood_ds)?;
        }
        let hist = eval::ood_report(&model, &ood_ds, cfg.eval.hist_bin_width, cfg.eval.hist_min_score)?;
        Some(hist)
    } else {
        None
    };

    fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("summary.json"),
        &EvalSummary {
            config_hash: &hash,
            seed: cfg.seed,
            report: &report,
            ood: ood.as_ref().map(|h| OodSummary {
                median: h.median,
                frac_above_0_9: h.frac_above_0_9,
                retained: h.retained,
                total: h.total,
            }),
        },
    )?;
    if flags.ece {
        let mut f = BufWriter::new(File::create(out_dir.join("ece.csv"))?);
        provenance_line(&mut f, &hash, cfg.seed)?;
        eval::write_ece_csv(&mut f, &report.ece_bins)?;
    }
    if flags.hist {
        let mut f = BufWriter::new(File::create(out_dir.join("histogram.csv"))?);
        provenance_line(&mut f, &hash, cfg.seed)?;
        eval::write_histogram_csv(&mut f, &report.histogram)?;
    }
    if let Some(hist) = &ood {
        let mut f = BufWriter::new(File::create(out_dir.join("ood.csv"))?);
        provenance_line(&mut f, &hash, cfg.seed)?;
        eval::write_histogram_csv(&mut f, hist)?;
    }

    print!(
        "eval {hash} seed {}: error {:.4}, ece {:.4}",
        cfg.seed, report.error_rate, report.ece
    );
    match (temperature, report.ece_after_temperature) {
        (Some(t), Some(after)) => println!(", temperature {t} (ece {after:.4} after scaling)"),
        _ => println!(),
    }
    Ok(())
}

fn sanitize(token: &str) -> String {
    token
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '-' })
        .collect()
}

fn parse_float(token: &str) -> CliResult<f64> {
    token
        .parse::<f64>()
        .map_err(|_| usage(format!("expected a number, got {token:?}")))
}

/// Strategy tokens for sweeps: a kind name plus optional `key=value` pairs,
/// e.g. `baseline`, `uls:alpha=0.1`, `pls:w=0.3`, `pls_no_learned`.
pub fn parse_strategy_token(token: &str) -> CliResult<TargetStrategy> {
    let (kind, rest) = match token.split_once(':') {
        Some((k, r)) => (k, r),
        None => (token, ""),
    };
    let mut params: Vec<(String, f64)> = Vec::new();
    for pair in rest.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("malformed strategy parameter {pair:?} in {token:?}")))?;
        params.push((key.trim().to_string(), parse_float(value.trim())?));
    }
    let mut take = |key: &str| -> Option<f64> {
        params
            .iter()
            .position(|(k, _)| k == key)
            .map(|i| params.remove(i).1)
    };

    let strategy = match kind.trim() {
        "baseline" => TargetStrategy::Baseline,
        "uls" => TargetStrategy::Uls {
            alpha: take("alpha").ok_or_else(|| usage("uls needs alpha=..."))?,
        },
        "mixup" => TargetStrategy::Mixup,
        "mixup_uls" => TargetStrategy::MixupUls {
            alpha: take("alpha").ok_or_else(|| usage("mixup_uls needs alpha=..."))?,
        },
        "pls" => TargetStrategy::Pls {
            w: take("w").unwrap_or(0.5),
        },
        "pls_ud" => TargetStrategy::PlsUd {
            alpha: take("alpha").ok_or_else(|| usage("pls_ud needs alpha=..."))?,
        },
        "pls_coeff" => TargetStrategy::PlsCoeff {
            w: take("w").unwrap_or(0.5),
        },
        "pls_no_learned" => TargetStrategy::PlsNoLearned,
        other => return Err(usage(format!("unknown strategy {other:?}"))),
    };
    if let Some((key, _)) = params.first() {
        return Err(usage(format!("strategy {kind:?} does not take parameter {key:?}")));
    }
    strategy.validate()?;
    Ok(strategy)
}

fn apply_axis(strategy: &mut TargetStrategy, axis: Axis, token: &str) -> CliResult<()> {
    match axis {
        Axis::W => {
            let v = parse_float(token)?;
            match strategy {
                TargetStrategy::Pls { w } | TargetStrategy::PlsCoeff { w } => *w = v,
                other => {
                    return Err(usage(format!(
                        "axis w only applies to strategies with a weight factor, not {other:?}"
                    )))
                }
            }
        }
        Axis::Alpha => {
            let v = parse_float(token)?;
            match strategy {
                TargetStrategy::Uls { alpha }
                | TargetStrategy::MixupUls { alpha }
                | TargetStrategy::PlsUd { alpha } => *alpha = v,
                other => {
                    return Err(usage(format!(
                        "axis alpha only applies to smoothing strategies with alpha, not {other:?}"
                    )))
                }
            }
        }
        Axis::Strategy => *strategy = parse_strategy_token(token)?,
    }
    Ok(())
}

pub fn cmd_sweep(config_path: &Path, axis: Axis, values: &[String], out_dir: &Path) -> CliResult<()> {
    let (cfg, hash) = load_config(config_path)?;
    let tokens: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if tokens.is_empty() {
        return Err(usage("sweep needs at least one value"));
    }

    // Validate every value up front so a bad token cannot leave a half
    // finished sweep behind.
    let mut runs: Vec<(&str, ExperimentConfig, PathBuf)> = Vec::new();
    for token in tokens {
        let mut run_cfg = cfg.clone();
        apply_axis(&mut run_cfg.train.strategy, axis, token)?;
        run_cfg.train.validate()?;
        let dir = out_dir.join(format!("run-{}", sanitize(token)));
        runs.push((token, run_cfg, dir));
    }

    let mut rows = Vec::with_capacity(runs.len());
    for (token, run_cfg, dir) in &runs {
        let report = run_experiment(run_cfg, &hash, dir)?;
        println!(
            "sweep {axis:?}={token}: error {:.4}, ece {:.4}",
            report.error_rate, report.ece
        );
        rows.push((*token, report.error_rate, report.ece));
    }

    fs::create_dir_all(out_dir)?;
    let mut f = BufWriter::new(File::create(out_dir.join("sweep.csv"))?);
    provenance_line(&mut f, &hash, cfg.seed)?;
    writeln!(f, "value,final_error,final_ece")?;
    for (token, error, ece) in &rows {
        writeln!(f, "{token},{error},{ece}")?;
    }
    f.flush()?;
    println!("sweep table in {}", out_dir.join("sweep.csv").display());
    Ok(())
}

pub fn cmd_gradcheck(seed: u64, epsilon: f64, tolerance: f64, strategy: Option<&str>) -> CliResult<()> {
    let strategies = match strategy {
        Some(token) => vec![parse_strategy_token(token)?],
        None => vec![
            TargetStrategy::Baseline,
            TargetStrategy::Uls { alpha: 0.1 },
            TargetStrategy::Pls { w: 0.5 },
            TargetStrategy::PlsCoeff { w: 0.5 },
        ],
    };

    let (b, d, k) = (4, 6, 3);
    let model_cfg = ModelConfig {
        hidden_widths: vec![8],
        embed_dim: 5,
        num_classes: k,
    };
    let mut rng = stream_rng(seed, STREAM_INIT);
    let inputs = Matrix::new(b, d, (0..b * d).map(|_| rng.gen_range(-1.5..1.5)).collect())?;
    let mut onehot = Matrix::zeros(b, k);
    for r in 0..b {
        onehot.set(r, rng.gen_range(0..k), 1.0);
    }
    let batch = Batch { inputs, onehot };

    let mut all_passed = true;
    for strategy in &strategies {
        let head = if strategy.wants_scalar_head() {
            HeadMode::Coefficient
        } else {
            HeadMode::Distribution
        };
        let model = Model::init(&model_cfg, d, head, &mut rng)?;
        let report = gradient_check(&model, &batch, strategy, epsilon, tolerance)?;
        println!("{strategy:?}:");
        println!("{report}");
        all_passed &= report.passed;
    }
    if !all_passed {
        return Err(runtime("gradient check failed"));
    }
    println!("all gradients within tolerance {tolerance:e}");
    Ok(())
}
