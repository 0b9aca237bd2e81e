use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{prepare, EvalMode, PipelineConfig};
use crate::artifact::{ModelArtifact, ModelDescriptor};
use crate::data::{synthesize, write_csv};
use crate::error::{Error, Result};
use crate::explain::{
    build_background, local_explanation, rank_features, write_local_records, write_ranking_csv, FeatureRanking,
    EXACT_FEATURE_LIMIT,
};
use crate::metrics::EvalMetrics;
use crate::nn::Task;
use crate::reduce::{
    full_spec, run_reduction, select_top, write_comparison_csv, write_timing_csv, ComparisonRow, FeatureSubset,
    ModelKind, ReductionConfig, ReductionReport,
};
use crate::training::{evaluate, fit, kfold_evaluate_windows, timed_inference, KFoldReport};

/// Validate, create the output directory and return the config hash.
fn start(config: &PipelineConfig) -> Result<String> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    Ok(config.config_hash())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn hash_comment(hash: &str) -> String {
    format!("config_hash: {hash}")
}

/// Write `synthetic.csv` into the output directory.
pub fn cmd_synth(config: &PipelineConfig) -> Result<PathBuf> {
    config.synthetic.validate()?;
    let hash = start(config)?;
    let raw = synthesize(&config.synthetic)?;
    let path = config.out("synthetic.csv");
    let mut w = create(&path)?;
    let planted = config
        .synthetic
        .informative_indices
        .iter()
        .map(|i| raw.feature_names[*i].clone())
        .collect::<Vec<_>>()
        .join(",");
    write_csv(
        &raw,
        &mut w,
        &[hash_comment(&hash), format!("informative: {planted}")],
    )?;
    w.flush()?;
    Ok(path)
}

/// One trained kind in `train_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: ModelKind,
    pub model_file: String,
    pub param_count: usize,
    pub reference_param_count: usize,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Test accuracy; absent for regression.
    pub accuracy: Option<f64>,
    pub rmse: Option<f64>,
    pub metrics: EvalMetrics,
    pub kfold: Option<KFoldReport>,
}

/// Deterministic training report. Wall-clock figures go to
/// `train_timing.json` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub task: Task,
    pub eval: EvalMode,
    pub feature_names: Vec<String>,
    pub timesteps: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub models: Vec<TrainedModel>,
}

impl TrainReport {
    pub fn summary_lines(&self) -> Vec<String> {
        self.models
            .iter()
            .map(|m| {
                let mut line = format!(
                    "{}: {} params, stopped at epoch {}, test {} {:.4}",
                    m.model,
                    m.param_count,
                    m.stopped_epoch,
                    m.metrics.headline_name(),
                    m.metrics.headline()
                );
                if let Some(k) = &m.kfold {
                    line += &format!(
                        ", {}-fold mean {} {:.4}",
                        k.folds.len(),
                        k.mean.headline_name(),
                        k.mean.headline()
                    );
                }
                line
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
struct TimingEntry {
    model: ModelKind,
    train_seconds: f64,
    infer_seconds: f64,
    kfold_train_seconds: Option<Vec<f64>>,
}

/// Train every configured kind on the training split and save
/// `model_<kind>.lvrm`, `train_report.json` and `train_timing.json`.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainReport> {
    let hash = start(config)?;
    let data = prepare(config)?;
    let f = data.train.n_features();
    let t = data.train.timesteps();
    let train = data.train.to_labeled(config.task)?;
    let test = data.test.to_labeled(config.task)?;
    let mut report = TrainReport {
        config_hash: hash.clone(),
        task: config.task,
        eval: config.eval,
        feature_names: data.train.feature_names.clone(),
        timesteps: t,
        train_windows: data.train.len(),
        test_windows: data.test.len(),
        models: Vec::new(),
    };
    let mut timing = Vec::new();
    for &kind in &config.models {
        let spec = full_spec(kind, f, t, config.task);
        let (net, history) = fit(&spec, &train, &config.train)?;
        let metrics = evaluate(&net, &test)?;
        let (_, infer_seconds) = timed_inference(&net, &test.inputs, config.inference_repeats)?;
        let kfold = match config.eval {
            EvalMode::Split => None,
            EvalMode::Kfold => Some(kfold_evaluate_windows(&spec, &data.all, config.task, &config.train)?),
        };
        let model_file = format!("model_{kind}.lvrm");
        let artifact = ModelArtifact {
            descriptor: ModelDescriptor {
                kind: Some(kind),
                spec: spec.clone(),
                rng_seed: net.rng_seed(),
                feature_names: data.train.feature_names.clone(),
                timesteps: t,
                normalization: Some(data.stats.clone()),
                config_hash: hash.clone(),
            },
            network: net,
        };
        let mut w = create(&config.out(&model_file))?;
        artifact.write(&mut w)?;
        w.flush()?;
        timing.push(TimingEntry {
            model: kind,
            train_seconds: history.wall_clock_seconds,
            infer_seconds,
            kfold_train_seconds: kfold
                .as_ref()
                .map(|k| k.folds.iter().map(|f| f.history.wall_clock_seconds).collect()),
        });
        report.models.push(TrainedModel {
            model: kind,
            model_file,
            param_count: artifact.network.parameter_count(),
            reference_param_count: kind.reference_param_count(false),
            stopped_epoch: history.stopped_epoch,
            best_epoch: history.best_epoch,
            best_val_loss: history.best_val_loss,
            accuracy: metrics.accuracy(),
            rmse: match &metrics {
                EvalMetrics::Regression(r) => Some(r.rmse),
                EvalMetrics::Classification(_) => None,
            },
            metrics,
            kfold,
        });
    }
    write_json(&config.out("train_report.json"), &report)?;
    write_json(
        &config.out("train_timing.json"),
        &serde_json::json!({ "config_hash": hash, "models": timing }),
    )?;
    Ok(report)
}

fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    let k = if k == 0 { n } else { k.min(n) };
    (0..k).map(|i| i * n / k).collect()
}

/// Rank features of a saved model and write `ranking.csv`,
/// `local.ndrecords` and `importance.svg`.
///
/// `model` defaults to `model_<ranking_model>.lvrm` in the output directory.
pub fn cmd_explain(config: &PipelineConfig, model: Option<&Path>) -> Result<FeatureRanking> {
    let hash = start(config)?;
    let path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out(&format!("model_{}.lvrm", config.ranking_model)));
    if !path.exists() {
        return Err(Error::Config(format!(
            "model file {} not found; run `train` first",
            path.display()
        )));
    }
    let artifact = ModelArtifact::read(BufReader::new(File::open(&path)?))?;
    let d = &artifact.descriptor;
    let data = prepare(config)?;
    if d.feature_names != data.train.feature_names || d.timesteps != data.train.timesteps() {
        return Err(Error::Config(format!(
            "{} was trained on different features or window length",
            path.display()
        )));
    }
    if d.normalization.as_ref() != Some(&data.stats) {
        return Err(Error::Config(format!(
            "{} was trained on a different split; retrain with this config",
            path.display()
        )));
    }
    let estimator = config.estimator();
    let f = data.train.n_features();
    if matches!(estimator, crate::explain::Estimator::Exact) && f > EXACT_FEATURE_LIMIT {
        return Err(Error::Capacity {
            features: f,
            limit: EXACT_FEATURE_LIMIT,
        });
    }
    let names = &data.train.feature_names;
    let picked = evenly_spaced(data.test.len(), config.explain_samples);
    let x_test = data.test.windows.select(&picked);
    let net = &artifact.network;
    let (ranking, _) = rank_features(net, &data.train.windows, &x_test, names, estimator, &config.rank)?;

    let model_name = d.kind.map(|k| k.to_string()).unwrap_or_else(|| "custom".into());
    let comments = [hash_comment(&hash), format!("model: {model_name}")];
    let mut w = create(&config.out("ranking.csv"))?;
    write_ranking_csv(&ranking, &mut w, &comments)?;
    w.flush()?;

    let background = build_background(&data.train.windows, &config.rank)?;
    let locals = picked
        .iter()
        .take(config.local_samples)
        .map(|&i| local_explanation(net, data.test.windows.window(i), &background, estimator, i))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&config.out("local.ndrecords"))?;
    write_local_records(&locals, names, Some(&hash), &mut w)?;
    w.flush()?;

    let svg = super::importance_svg(&ranking, &format!("Feature importance ({model_name})"), &hash);
    fs::write(config.out("importance.svg"), svg)?;
    Ok(ranking)
}

/// Deterministic part of a reduction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub config_hash: String,
    pub selected: FeatureSubset,
    pub rows: Vec<ComparisonRow>,
}

/// Retrain on the top-ranked features and write `comparison.csv`,
/// `timing.csv` and `reduction_report.json`.
///
/// `ranking` defaults to `ranking.csv` in the output directory.
pub fn cmd_reduce(config: &PipelineConfig, ranking: Option<&Path>) -> Result<ReductionReport> {
    let hash = start(config)?;
    let path = ranking.map(Path::to_path_buf).unwrap_or_else(|| config.out("ranking.csv"));
    if !path.exists() {
        return Err(Error::Config(format!(
            "ranking file {} not found; run `explain` first",
            path.display()
        )));
    }
    let data = prepare(config)?;
    let ranking = FeatureRanking::read_csv(BufReader::new(File::open(&path)?), &data.train.feature_names)?;
    let subset = select_top(&ranking, config.selection)?;
    let rc = ReductionConfig {
        train: config.train.clone(),
        task: config.task,
        architecture: config.reduced_architecture,
        inference_repeats: config.inference_repeats,
    };
    let report = run_reduction(&data.train, &data.test, &subset, &config.models, &rc)?;
    let comments = [hash_comment(&hash)];
    let mut w = create(&config.out("comparison.csv"))?;
    write_comparison_csv(&report, &mut w, &comments)?;
    w.flush()?;
    let mut w = create(&config.out("timing.csv"))?;
    write_timing_csv(&report, &mut w, &comments)?;
    w.flush()?;
    write_json(
        &config.out("reduction_report.json"),
        &ReductionSummary {
            config_hash: hash,
            selected: report.selected.clone(),
            rows: report.rows.clone(),
        },
    )?;
    Ok(report)
}

/// Collect whatever outputs exist into `report.md` and return its lines.
pub fn cmd_report(config: &PipelineConfig) -> Result<Vec<String>> {
    let hash = start(config)?;
    let mut lines = vec!["# litevr report".to_string(), String::new(), format!("config_hash: {hash}")];
    let mut found = false;

    let p = config.out("train_report.json");
    if p.exists() {
        found = true;
        let r: TrainReport = serde_json::from_reader(BufReader::new(File::open(&p)?))?;
        lines.push(String::new());
        lines.push(format!(
            "## Training ({} features, {} train / {} test windows)",
            r.feature_names.len(),
            r.train_windows,
            r.test_windows
        ));
        lines.push(String::new());
        if r.config_hash != hash {
            lines.push(format!("(written under config {})", r.config_hash));
        }
        lines.extend(r.summary_lines().into_iter().map(|l| format!("- {l}")));
    }

    let p = config.out("ranking.csv");
    if p.exists() {
        found = true;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&p)?;
        lines.push(String::new());
        lines.push("## Top features".into());
        lines.push(String::new());
        for rec in rdr.records().take(10) {
            let rec = rec?;
            lines.push(format!("{}. {} ({})", &rec[2], &rec[0], &rec[1]));
        }
    }

    let p = config.out("reduction_report.json");
    if p.exists() {
        found = true;
        let r: ReductionSummary = serde_json::from_reader(BufReader::new(File::open(&p)?))?;
        lines.push(String::new());
        lines.push(format!("## Reduction to {} features", r.selected.len()));
        lines.push(String::new());
        lines.push(format!("selected: {}", r.selected.names.join(", ")));
        lines.push(String::new());
        lines.push("| model | params | ratio | metric | full | reduced |".into());
        lines.push("|---|---|---|---|---|---|".into());
        for row in &r.rows {
            lines.push(format!(
                "| {} | {} -> {} | {:.2}x | {} | {:.4} | {:.4} |",
                row.model,
                row.full_params,
                row.reduced_params,
                row.param_ratio,
                row.full_metrics.headline_name(),
                row.full_metrics.headline(),
                row.reduced_metrics.headline()
            ));
        }
    }
    if !found {
        return Err(Error::Config(format!(
            "nothing to report in {}; run train, explain or reduce first",
            config.out_dir.display()
        )));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(config.out("report.md"), text)?;
    Ok(lines)
}
