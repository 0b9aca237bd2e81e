//! Mini-batch Adam with early stopping, k-fold evaluation and timed inference.

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, normalize, split_indices, NormStats, WindowedDataset};
use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, regression_metrics, EvalMetrics, SEVERITY_NAMES};
use crate::nn::{argmax, AdamState, LabeledBatch, Mode, Network, NetworkSpec, Targets, Task};
use crate::seed;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub folds: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Keep sessions whole when building k-fold partitions.
    pub group_by_session: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            lr: 0.001,
            patience: 30,
            folds: 10,
            validation_fraction: 0.1,
            seed: 0,
            group_by_session: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Last epoch run, counting from 1.
    pub stopped_epoch: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Not serialized, so reports holding a history stay byte-stable.
    #[serde(default, skip_serializing)]
    pub wall_clock_seconds: f64,
}

/// Train a fresh network on `train`.
///
/// A `validation_fraction` share of `train` is held out and scored after
/// every epoch. Training stops once `patience` epochs pass without a strictly
/// lower validation loss, and the best parameters are restored.
pub fn fit(spec: &NetworkSpec, train: &LabeledBatch, config: &TrainConfig) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    check_task(spec, train)?;
    let start = Instant::now();
    let (fit_idx, val_idx) = split_indices(train.len(), 1.0 - config.validation_fraction, seed::derive(config.seed, &[1]))?;
    let val = train.select(&val_idx);
    let mut net = Network::new(spec.clone(), seed::derive(config.seed, &[0]))?;
    let mut adam = AdamState::new(net.parameter_count(), config.lr);

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        wall_clock_seconds: 0.0,
    };
    let mut best_params = net.params().to_vec();
    let mut order = fit_idx.clone();
    for epoch in 1..=config.epochs {
        let diverged = |e: Error| match e {
            Error::Numeric { .. } => Error::Diverged {
                epoch,
                last_finite_epoch: epoch - 1,
            },
            other => other,
        };
        order.copy_from_slice(&fit_idx);
        order.shuffle(&mut seed::rng(seed::derive(config.seed, &[2, epoch as u64])));
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train.select(chunk);
            let mode = Mode::Train {
                seed: seed::derive(config.seed, &[3, epoch as u64, b as u64]),
            };
            let (loss, grad) = net.loss_and_gradient(&batch, mode).map_err(diverged)?;
            if !loss.is_finite() {
                return Err(diverged(Error::numeric("training loss", None)));
            }
            net.adam_step(&grad, &mut adam).map_err(diverged)?;
            weighted += loss * chunk.len() as f64;
        }
        let val_loss = net.loss(&val, Mode::Inference).map_err(diverged)?;
        if !val_loss.is_finite() {
            return Err(diverged(Error::numeric("validation loss", None)));
        }
        history.train_loss.push(weighted / order.len() as f64);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_params.copy_from_slice(net.params());
        } else if epoch - history.best_epoch >= config.patience {
            break;
        }
    }
    net.set_params(&best_params)?;
    history.wall_clock_seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    Ok((net, history))
}

fn check_task(spec: &NetworkSpec, data: &LabeledBatch) -> Result<()> {
    check_spec(spec, data.len(), data.task(), data.class_count())
}

fn check_spec(spec: &NetworkSpec, n: usize, task: Task, classes: Option<usize>) -> Result<()> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::arg("training set is empty"));
    }
    if spec.task()? != task {
        return Err(Error::arg(format!(
            "{:?} network cannot be trained on {:?} targets",
            spec.task()?,
            task
        )));
    }
    if let Some(c) = classes {
        if c != spec.output_width() {
            return Err(Error::shape(format!(
                "network has {} outputs, labels have {c} classes",
                spec.output_width()
            )));
        }
    }
    Ok(())
}

/// Arg-max class of every window.
pub fn predict_classes(net: &Network, x: &Tensor3) -> Result<Vec<usize>> {
    let p = net.predict(x)?;
    Ok(p.axis_iter(Axis(0)).map(|r| argmax(r.iter())).collect())
}

/// Score `net` on `data` with the metric family of its task.
pub fn evaluate(net: &Network, data: &LabeledBatch) -> Result<EvalMetrics> {
    let out = net.predict(&data.inputs)?;
    metrics_from_outputs(&out, data)
}

pub fn metrics_from_outputs(out: &Array2<f64>, data: &LabeledBatch) -> Result<EvalMetrics> {
    match &data.targets {
        Targets::Classes(m) => {
            let pred: Vec<usize> = out.axis_iter(Axis(0)).map(|r| argmax(r.iter())).collect();
            let generic: Vec<String> = (0..m.ncols()).map(|i| format!("class{i}")).collect();
            let names: Vec<&str> = if m.ncols() == SEVERITY_NAMES.len() {
                SEVERITY_NAMES.to_vec()
            } else {
                generic.iter().map(String::as_str).collect()
            };
            Ok(EvalMetrics::Classification(classification_metrics(
                &pred,
                &data.class_indices(),
                &names,
            )?))
        }
        Targets::Fms(t) => Ok(EvalMetrics::Regression(regression_metrics(
            &out.column(0).to_vec(),
            t,
        )?)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: EvalMetrics,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<FoldResult>,
    pub mean: EvalMetrics,
}

/// Train and test once per fold of a seeded k-fold partition.
///
/// Folds are independent and run on the rayon pool.
pub fn kfold_evaluate(spec: &NetworkSpec, data: &LabeledBatch, config: &TrainConfig) -> Result<KFoldReport> {
    config.validate()?;
    check_task(spec, data)?;
    let groups = if config.group_by_session {
        Some(
            data.groups
                .as_deref()
                .ok_or_else(|| Error::arg("grouped folds need session ids on the batch"))?,
        )
    } else {
        None
    };
    kfold_core(spec, data.len(), groups, config, |train_idx, test_idx| {
        Ok((data.select(train_idx), data.select(test_idx)))
    })
}

/// K-fold over raw windows; each fold is min-max scaled with statistics of
/// its own training part only.
pub fn kfold_evaluate_windows(
    spec: &NetworkSpec,
    data: &WindowedDataset,
    task: Task,
    config: &TrainConfig,
) -> Result<KFoldReport> {
    config.validate()?;
    let classes = (task == Task::Classification).then_some(crate::data::Severity::ALL.len());
    check_spec(spec, data.len(), task, classes)?;
    let groups = config.group_by_session.then_some(data.sessions.as_slice());
    kfold_core(spec, data.len(), groups, config, |train_idx, test_idx| {
        let train = data.select(train_idx);
        let stats = NormStats::fit(&train)?;
        Ok((
            normalize(&train, &stats)?.to_labeled(task)?,
            normalize(&data.select(test_idx), &stats)?.to_labeled(task)?,
        ))
    })
}

fn kfold_core<P>(spec: &NetworkSpec, n: usize, groups: Option<&[usize]>, config: &TrainConfig, prepare: P) -> Result<KFoldReport>
where
    P: Fn(&[usize], &[usize]) -> Result<(LabeledBatch, LabeledBatch)> + Sync,
{
    let folds = kfold_indices(n, config.folds, seed::derive(config.seed, &[10]), groups)?;
    let results: Vec<Result<FoldResult>> = folds
        .par_iter()
        .enumerate()
        .map(|(i, test_idx)| {
            let mut in_test = vec![false; n];
            for &j in test_idx {
                in_test[j] = true;
            }
            let train_idx: Vec<usize> = (0..n).filter(|&j| !in_test[j]).collect();
            let (train, test) = prepare(&train_idx, test_idx)?;
            let fold_config = TrainConfig {
                seed: seed::derive(config.seed, &[11, i as u64]),
                ..config.clone()
            };
            let (net, history) = fit(spec, &train, &fold_config)?;
            let metrics = evaluate(&net, &test)?;
            Ok(FoldResult {
                fold_index: i,
                train_size: train_idx.len(),
                test_size: test_idx.len(),
                metrics,
                history,
            })
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = EvalMetrics::mean(&folds.iter().map(|f| f.metrics.clone()).collect::<Vec<_>>())?;
    Ok(KFoldReport { folds, mean })
}

/// Predict `repeats` times on the calling thread; returns the last
/// predictions and the median wall-clock seconds. `repeats = 0` runs once.
pub fn timed_inference(net: &Network, data: &Tensor3, repeats: usize) -> Result<(Array2<f64>, f64)> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let p = net.predict(data)?;
        times.push(t.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
        out = Some(p);
    }
    Ok((out.expect("at least one run"), median(&mut times)))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
