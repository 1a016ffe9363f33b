//! End-to-end tests of the plslab binary: artifact layout, provenance
//! stamping, determinism and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn plslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plslab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn base_config(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "seed": seed,
        "dataset": {
            "kind": "blobs",
            "num_classes": 3,
            "per_class": 40,
            "dim": 5,
            "center_spread": 3.0,
            "noise_sigma": 1.0
        },
        "split": {"train": 0.6, "val": 0.2, "test": 0.2},
        "model": {"hidden_widths": [8], "embed_dim": 6, "num_classes": 3},
        "train": {"strategy": {"kind": "pls", "w": 0.5}, "epochs": 2, "batch_size": 16},
        "eval": {
            "ece_bins": 15,
            "hist_bin_width": 0.05,
            "ood": {"kind": "uniform_noise", "count": 30, "dim": 5, "low": -3.0, "high": 3.0}
        }
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_writes_stamped_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(3));
    let out_dir = dir.path().join("run");
    let out = plslab(&["train", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    for name in ["checkpoint.json", "runlog.csv", "report.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let runlog = fs::read_to_string(out_dir.join("runlog.csv")).unwrap();
    let first = runlog.lines().next().unwrap();
    assert!(first.starts_with("# config_hash="), "provenance line: {first}");
    assert!(first.contains("seed=3"));
    assert_eq!(runlog.lines().nth(1).unwrap(), "epoch,train_loss,val_error");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 12);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(report["seed"], 3);
    assert!(report["error_rate"].is_number());
    assert!(report["ece"].is_number());

    let checkpoint: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(checkpoint["config_hash"].as_str().unwrap(), hash);
    assert_eq!(checkpoint["seed"], 3);
}

#[test]
fn identical_runs_produce_identical_runlogs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(11));
    let mut logs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = plslab(&["train", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        logs.push(fs::read(out_dir.join("runlog.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1], "runlog.csv differs between identical runs");
}

#[test]
fn malformed_config_exits_2_with_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("broken.json");
    fs::write(&config, "{ this is not json").unwrap();
    let out_dir = dir.path().join("run");
    let out = plslab(&["train", "--config", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("invalid config"));
    assert!(!out_dir.exists(), "failed run must not create outputs");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(1);
    cfg["learning_rate_typo"] = serde_json::json!(0.1);
    let config = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("run");
    let out = plslab(&["train", "--config", &config, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn bad_split_fractions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(1);
    cfg["split"] = serde_json::json!({"train": 0.5, "val": 0.2, "test": 0.2});
    let config = write_config(dir.path(), &cfg);
    let out = plslab(&["train", "--config", &config, "--out-dir", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("sum to 1"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(5));
    let out_dir = dir.path().join("sweep");
    let out = plslab(&[
        "sweep",
        "--config",
        &config,
        "--axis",
        "w",
        "--values",
        "0.1,0.5,0.9",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "value,final_error,final_ece");
    assert_eq!(lines.len(), 5, "expected 3 data rows:\n{csv}");
    assert!(lines[2].starts_with("0.1,"));
    for value in ["0.1", "0.5", "0.9"] {
        let run = out_dir.join(format!("run-{value}"));
        assert!(run.join("report.json").exists(), "missing artifacts for {value}");
    }
}

#[test]
fn sweep_over_strategies_accepts_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(6));
    let out_dir = dir.path().join("sweep");
    let out = plslab(&[
        "sweep",
        "--config",
        &config,
        "--axis",
        "strategy",
        "--values",
        "baseline,uls:alpha=0.1,mixup,pls:w=0.5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "expected 4 data rows:\n{csv}");
    assert!(csv.contains("uls:alpha=0.1,"));
    assert!(out_dir.join("run-uls-alpha-0.1").join("runlog.csv").exists());
}

#[test]
fn sweep_rejects_empty_values_and_wrong_axis() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(5));
    let out_dir = dir.path().join("sweep");

    let out = plslab(&[
        "sweep", "--config", &config, "--axis", "w", "--values", "", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(!out_dir.exists());

    // Alpha does not exist on the configured PLS strategy.
    let out = plslab(&[
        "sweep", "--config", &config, "--axis", "alpha", "--values", "0.1,0.2", "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());

    let out = plslab(&[
        "sweep", "--config", &config, "--axis", "strategy", "--values", "no_such_thing",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown strategy"));
}

#[test]
fn eval_writes_requested_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(8));
    let train_dir = dir.path().join("train");
    let out = plslab(&["train", "--config", &config, "--out-dir", train_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let checkpoint = train_dir.join("checkpoint.json");

    // No flags: the summary is the only artifact.
    let bare_dir = dir.path().join("bare");
    let out = plslab(&[
        "eval", "--checkpoint", checkpoint.to_str().unwrap(), "--config", &config,
        "--out-dir", bare_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let names: Vec<String> = fs::read_dir(&bare_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["summary.json"]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bare_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["temperature"].is_null());
    assert!(summary.get("ood").is_none());

    // All flags: csv reports plus temperature fields in the summary.
    let full_dir = dir.path().join("full");
    let out = plslab(&[
        "eval", "--checkpoint", checkpoint.to_str().unwrap(), "--config", &config,
        "--out-dir", full_dir.to_str().unwrap(),
        "--ece", "--hist", "--temperature", "--ood",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["summary.json", "ece.csv", "histogram.csv", "ood.csv"] {
        assert!(full_dir.join(name).exists(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(full_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["temperature"].as_f64().unwrap() > 0.0);
    assert!(summary["ece_after_temperature"].is_number());
    assert!(summary["ood"]["median"].is_number());
    let ece_csv = fs::read_to_string(full_dir.join("ece.csv")).unwrap();
    assert!(ece_csv.starts_with("# config_hash="));
    assert!(ece_csv.contains("lower,upper,count,confidence,accuracy"));
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(9));
    let train_dir = dir.path().join("train");
    let out = plslab(&["train", "--config", &config, "--out-dir", train_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let mut wide = base_config(9);
    wide["dataset"]["dim"] = serde_json::json!(7);
    wide["eval"]["ood"]["dim"] = serde_json::json!(7);
    let wide_path = dir.path().join("wide.json");
    fs::write(&wide_path, serde_json::to_vec_pretty(&wide).unwrap()).unwrap();

    let eval_dir = dir.path().join("eval");
    let out = plslab(&[
        "eval", "--checkpoint", train_dir.join("checkpoint.json").to_str().unwrap(),
        "--config", wide_path.to_str().unwrap(),
        "--out-dir", eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("dimension"), "stderr: {}", stderr(&out));
    assert!(!eval_dir.exists());
}

#[test]
fn eval_without_ood_block_rejects_ood_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(10);
    cfg["eval"].as_object_mut().unwrap().remove("ood");
    let config = write_config(dir.path(), &cfg);
    let train_dir = dir.path().join("train");
    let out = plslab(&["train", "--config", &config, "--out-dir", train_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let eval_dir = dir.path().join("eval");
    let out = plslab(&[
        "eval", "--checkpoint", train_dir.join("checkpoint.json").to_str().unwrap(),
        "--config", &config, "--out-dir", eval_dir.to_str().unwrap(), "--ood",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("eval.ood"));
    assert!(!eval_dir.exists());
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &base_config(2));
    let out = plslab(&[
        "eval", "--checkpoint", dir.path().join("nope.json").to_str().unwrap(),
        "--config", &config, "--out-dir", dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
}

#[test]
fn gradcheck_passes_and_reports() {
    let out = plslab(&["gradcheck"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("smoothing_head"));
    assert!(stdout.contains("within tolerance"));

    let out = plslab(&["gradcheck", "--strategy", "pls_coeff:w=0.3"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn standardize_flag_round_trips_through_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base_config(13);
    cfg["standardize"] = serde_json::json!(true);
    let config = write_config(dir.path(), &cfg);
    let train_dir = dir.path().join("train");
    let out = plslab(&["train", "--config", &config, "--out-dir", train_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let checkpoint: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(train_dir.join("checkpoint.json")).unwrap()).unwrap();
    assert!(checkpoint["standardizer"].is_object());

    let eval_dir = dir.path().join("eval");
    let out = plslab(&[
        "eval", "--checkpoint", train_dir.join("checkpoint.json").to_str().unwrap(),
        "--config", &config, "--out-dir", eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}
