use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use litevr::data::{load_csv, synthesize, CsvSchema, SyntheticSpec};
use litevr::explain::{write_ranking_csv, FeatureRanking};
use serde_json::{json, Value};

fn litevr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_litevr"))
        .current_dir(dir)
        .env("LITEVR_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = litevr(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small, quickly trained pipeline on synthetic data. `patch` is merged
/// into the top level, and into `synthetic` for that key.
fn small_config(dir: &Path, patch: Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "timesteps": 8,
        "synthetic": {"n_sessions": 8, "rows_per_session": 100},
        "train": {"epochs": 25, "patience": 10, "batch_size": 64, "lr": 0.01},
        "explain_samples": 30,
        "local_samples": 2,
        "models": ["mlp"],
        "ranking_model": "mlp"
    });
    for (k, v) in patch.as_object().unwrap() {
        match (k.as_str(), v) {
            ("synthetic", Value::Object(m)) => {
                for (sk, sv) in m {
                    cfg["synthetic"][sk] = sv.clone();
                }
            }
            _ => cfg[k] = v.clone(),
        }
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn synth_writes_reloadable_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "a"]);
    ok(d, &["synth", "--out", "b"]);
    let a = fs::read(d.join("a/synthetic.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/synthetic.csv")).unwrap());

    let raw = load_csv(d.join("a/synthetic.csv"), &CsvSchema::default()).unwrap();
    let spec = SyntheticSpec {
        seed: 0,
        ..SyntheticSpec::default()
    };
    assert_eq!(raw.len(), spec.n_sessions * spec.rows_per_session);
    assert_eq!(raw, synthesize(&spec).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# config_hash: "));

    ok(d, &["synth", "--out", "c", "--seed", "5"]);
    assert_ne!(fs::read(d.join("c/synthetic.csv")).unwrap(), text.as_bytes());
}

#[test]
fn synth_rejects_out_of_range_informative_index() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"synthetic": {"informative_indices": [2, 12]}}"#).unwrap();
    let out = litevr(dir.path(), &["synth", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = litevr(dir.path(), &["train", "--dataset", "nowhere.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(litevr(d, &["train", "--model", "cnn"]).status.code(), Some(2));
    assert_eq!(litevr(d, &["train", "--eval", "loo"]).status.code(), Some(2));
    assert_eq!(
        litevr(d, &["reduce", "--select-count", "3", "--select-fraction", "0.5"]).status.code(),
        Some(2)
    );
    assert_eq!(litevr(d, &["explain"]).status.code(), Some(2));
    assert_eq!(litevr(d, &["report"]).status.code(), Some(2));
}

#[test]
fn train_report_has_metrics_and_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    let stdout = ok(d, &["train", "--config", "config.json"]);
    assert!(stdout.contains("mlp:"));
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/train_report.json")).unwrap()).unwrap();
    let m = &r["models"][0];
    assert_eq!(m["model"], "mlp");
    assert!(m["accuracy"].as_f64().unwrap() > 0.5);
    assert!(m["param_count"].as_u64().unwrap() > 0);
    assert_eq!(m["reference_param_count"], 17028);
    assert!(m["metrics"]["confusion"].is_object());
    assert!(d.join("out/model_mlp.lvrm").exists());
    assert!(d.join("out/train_timing.json").exists());
}

#[test]
fn regression_task_reports_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    ok(d, &["train", "--config", "config.json", "--task", "regression"]);
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/train_report.json")).unwrap()).unwrap();
    let m = &r["models"][0];
    assert!(m["accuracy"].is_null());
    assert!(m["rmse"].as_f64().unwrap() < 3.0);
}

#[test]
fn kfold_report_has_every_fold_and_a_mean() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    ok(d, &["train", "--config", "config.json", "--eval", "kfold", "--folds", "10", "--epochs", "3"]);
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/train_report.json")).unwrap()).unwrap();
    let k = &r["models"][0]["kfold"];
    let folds = k["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 10);
    let total: u64 = folds.iter().map(|f| f["test_size"].as_u64().unwrap()).sum();
    // 8 sessions of 100 rows, 8-step windows
    assert_eq!(total, 8 * 93);
    assert!(k["mean"]["accuracy"].is_number());
}

#[test]
fn explain_finds_planted_features_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    ok(d, &["train", "--config", "config.json"]);
    ok(d, &["explain", "--config", "config.json"]);
    let first = fs::read(d.join("out/ranking.csv")).unwrap();
    let names = litevr::data::default_feature_names(12);
    let ranking = FeatureRanking::read_csv(first.as_slice(), &names).unwrap();
    let top: Vec<usize> = ranking.order()[..4].to_vec();
    for planted in [2, 5, 9] {
        assert!(top.contains(&planted), "planted {planted} not in top 4 {top:?}");
    }
    let svg = fs::read_to_string(d.join("out/importance.svg")).unwrap();
    assert!(svg.contains("config_hash"));
    let local = fs::read_to_string(d.join("out/local.ndrecords")).unwrap();
    // two samples, four severity outputs each
    assert_eq!(local.lines().count(), 8);
    let rec: Value = serde_json::from_str(local.lines().next().unwrap()).unwrap();
    assert_eq!(rec["phi"].as_array().unwrap().len(), 12);

    ok(d, &["explain", "--config", "config.json"]);
    assert_eq!(fs::read(d.join("out/ranking.csv")).unwrap(), first);

    ok(d, &["explain", "--config", "config.json", "--estimator", "sampled", "--permutations", "50"]);
    let sampled = FeatureRanking::read_csv(fs::read(d.join("out/ranking.csv")).unwrap().as_slice(), &names).unwrap();
    assert_eq!(sampled.len(), 12);
}

#[test]
fn exact_estimator_refuses_wide_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({"synthetic": {"n_sessions": 4, "rows_per_session": 40, "n_features": 22}}));
    ok(d, &["train", "--config", "config.json", "--epochs", "1"]);
    let out = litevr(d, &["explain", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sampled"), "{err}");
}

fn reduce_setup(d: &Path, features: usize) {
    small_config(
        d,
        json!({"synthetic": {
            "n_sessions": 4,
            "rows_per_session": 60,
            "n_features": features,
            "informative_indices": [0, 2, 4]
        }}),
    );
    let names = litevr::data::default_feature_names(features);
    let importances: Vec<f64> = (0..features).map(|i| ((i * 7) % features) as f64).collect();
    let ranking = FeatureRanking::from_importances(&names, &importances).unwrap();
    fs::create_dir_all(d.join("out")).unwrap();
    write_ranking_csv(&ranking, fs::File::create(d.join("out/ranking.csv")).unwrap(), &[]).unwrap();
}

#[test]
fn reduce_to_eighteen_of_forty_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    reduce_setup(d, 43);
    let stdout = ok(d, &["reduce", "--config", "config.json", "--select-count", "18", "--epochs", "2"]);
    assert!(stdout.contains("features 43 -> 18"), "{stdout}");
    let csv = fs::read_to_string(d.join("out/comparison.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let get = |k: &str| row[header.iter().position(|h| h == k).unwrap()].to_string();
    assert_eq!(get("original_features"), "43");
    assert_eq!(get("reduced_features"), "18");
    assert!(!header.iter().any(|h| h.contains("seconds")));
    let timing = fs::read_to_string(d.join("out/timing.csv")).unwrap();
    assert!(timing.contains("train_time_ratio"));
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/reduction_report.json")).unwrap()).unwrap();
    assert_eq!(r["selected"]["indices"].as_array().unwrap().len(), 18);
}

#[test]
fn reduce_with_everything_kept_matches_full_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    reduce_setup(d, 6);
    let mut cfg: Value = serde_json::from_slice(&fs::read(d.join("config.json")).unwrap()).unwrap();
    cfg["reduced_architecture"] = "same_as_full".into();
    fs::write(d.join("config.json"), cfg.to_string()).unwrap();
    ok(d, &["reduce", "--config", "config.json", "--select-fraction", "1.0", "--epochs", "3"]);
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/reduction_report.json")).unwrap()).unwrap();
    let row = &r["rows"][0];
    assert_eq!(row["headline_delta"].as_f64().unwrap(), 0.0);
    assert_eq!(row["param_ratio"].as_f64().unwrap(), 1.0);
}

#[test]
fn reduce_all_kinds_gives_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    reduce_setup(d, 6);
    ok(d, &["reduce", "--config", "config.json", "--model", "all", "--epochs", "1"]);
    let csv = fs::read_to_string(d.join("out/comparison.csv")).unwrap();
    let models: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(models, ["lstm", "gru", "mlp"]);
}

#[test]
fn invalid_selection_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    reduce_setup(d, 6);
    let out = litevr(d, &["reduce", "--config", "config.json", "--select-count", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = litevr(d, &["reduce", "--config", "config.json", "--select-fraction", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "a,FMS,Severity,SessionID\n1,2,low,S1\nx,2,low,S1\n").unwrap();
    let out = litevr(d, &["train", "--dataset", "bad.csv", "--timesteps", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn divergence_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    let mut cfg: Value = serde_json::from_slice(&fs::read(d.join("config.json")).unwrap()).unwrap();
    cfg["train"]["lr"] = 1e300.into();
    cfg["task"] = "regression".into();
    fs::write(d.join("config.json"), cfg.to_string()).unwrap();
    let out = litevr(d, &["train", "--config", "config.json", "--epochs", "3"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_dataset_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d, json!({}));
    ok(d, &["synth", "--config", "config.json", "--out", "data"]);
    ok(d, &["train", "--config", "config.json", "--dataset", "data/synthetic.csv"]);
    let r: Value = serde_json::from_slice(&fs::read(d.join("out/train_report.json")).unwrap()).unwrap();
    assert_eq!(r["feature_names"].as_array().unwrap().len(), 12);
    let stdout = ok(d, &["report", "--config", "config.json", "--dataset", "data/synthetic.csv"]);
    assert!(stdout.contains("## Training"));
    assert!(d.join("out/report.md").exists());
}

/// Files whose bytes must not depend on wall-clock time.
const DETERMINISTIC: [&str; 10] = [
    "synthetic.csv",
    "model_mlp.lvrm",
    "model_lstm.lvrm",
    "train_report.json",
    "ranking.csv",
    "local.ndrecords",
    "importance.svg",
    "comparison.csv",
    "reduction_report.json",
    "report.md",
];

#[test]
fn every_stage_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(
        d,
        json!({"models": ["mlp", "lstm"], "synthetic": {"n_sessions": 4, "rows_per_session": 60}}),
    );
    for out in ["run1", "run2"] {
        let args = |cmd: &'static str| vec![cmd, "--config", "config.json", "--out", out, "--epochs", "4"];
        ok(d, &args("synth"));
        let mut train = args("train");
        train.extend(["--eval", "kfold", "--folds", "3"]);
        ok(d, &train);
        ok(d, &args("explain"));
        ok(d, &args("reduce"));
        ok(d, &args("report"));
    }
    for name in DETERMINISTIC {
        let a = fs::read(d.join("run1").join(name)).unwrap();
        let b = fs::read(d.join("run2").join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between runs");
    }
    for name in ["train_timing.json", "timing.csv"] {
        assert!(d.join("run1").join(name).exists());
    }
}
