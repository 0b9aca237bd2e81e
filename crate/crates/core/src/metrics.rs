//! Classification and regression scores, plus the per-model summary record.
//!
//! Everything is kept at full precision; percentages are a presentation
//! concern. Aggregates over classes are macro averages and are labelled so.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;

pub const SEVERITY_NAMES: [&str; 4] = ["none", "low", "medium", "high"];

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let p = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![vec![0; p]; p],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    fn column_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true samples of this class.
    pub support: u64,
    /// Precision had a zero denominator (the class was never predicted).
    pub precision_undefined: bool,
    /// Recall had a zero denominator (the class never occurs).
    pub recall_undefined: bool,
}

impl ClassScores {
    /// Neither predicted nor present.
    pub fn absent(&self) -> bool {
        self.precision_undefined && self.recall_undefined
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub classes: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

pub fn classification_metrics(pred: &[usize], truth: &[usize], class_names: &[&str]) -> Result<ClassificationReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::arg("no samples to score"));
    }
    let p = class_names.len();
    let mut cm = ConfusionMatrix::new(class_names.iter().map(|s| s.to_string()).collect());
    for (&y_hat, &y) in pred.iter().zip(truth) {
        if y >= p || y_hat >= p {
            return Err(Error::arg(format!("label outside the {p} known classes")));
        }
        cm.counts[y][y_hat] += 1;
    }
    let classes: Vec<ClassScores> = (0..p)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let predicted = cm.column_sum(c);
            let actual: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                name: class_names[c].to_string(),
                precision,
                recall,
                f1,
                support: actual,
                precision_undefined: predicted == 0,
                recall_undefined: actual == 0,
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| classes.iter().map(f).sum::<f64>() / p as f64;
    Ok(ClassificationReport {
        accuracy: cm.trace() as f64 / cm.total() as f64,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        classes,
        confusion: cm,
    })
}

fn ratio(num: f64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEval {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    /// Targets had zero variance; `r2` is reported as 0.
    pub r2_undefined: bool,
}

pub fn regression_metrics(pred: &[f64], targets: &[f64]) -> Result<RegressionEval> {
    let mse = crate::nn::loss::mean_squared_error(pred, targets)?;
    let n = targets.len() as f64;
    let mae = pred.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mean = targets.iter().sum::<f64>() / n;
    let ssr: f64 = pred.iter().zip(targets).map(|(p, t)| (t - p) * (t - p)).sum();
    let sst: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let (r2, r2_undefined) = if sst == 0.0 { (0.0, true) } else { (1.0 - ssr / sst, false) };
    Ok(RegressionEval {
        mse,
        rmse: mse.sqrt(),
        mae,
        r2,
        r2_undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum EvalMetrics {
    Classification(ClassificationReport),
    Regression(RegressionEval),
}

impl EvalMetrics {
    /// Headline number: accuracy or RMSE.
    pub fn headline(&self) -> f64 {
        match self {
            EvalMetrics::Classification(c) => c.accuracy,
            EvalMetrics::Regression(r) => r.rmse,
        }
    }

    pub fn headline_name(&self) -> &'static str {
        match self {
            EvalMetrics::Classification(_) => "accuracy",
            EvalMetrics::Regression(_) => "rmse",
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        match self {
            EvalMetrics::Classification(c) => Some(c.accuracy),
            EvalMetrics::Regression(_) => None,
        }
    }

    /// Element-wise mean of same-kind metrics; confusion counts are summed.
    pub fn mean(all: &[EvalMetrics]) -> Result<EvalMetrics> {
        let first = all.first().ok_or_else(|| Error::arg("no metrics to average"))?;
        let n = all.len() as f64;
        match first {
            EvalMetrics::Classification(c0) => {
                let reports: Vec<&ClassificationReport> = all
                    .iter()
                    .map(|m| match m {
                        EvalMetrics::Classification(c) => Ok(c),
                        _ => Err(Error::arg("mixed metric kinds")),
                    })
                    .collect::<Result<_>>()?;
                let avg = |f: &dyn Fn(&ClassificationReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
                let mut confusion = ConfusionMatrix::new(c0.confusion.class_names.clone());
                for r in &reports {
                    for (i, row) in r.confusion.counts.iter().enumerate() {
                        for (j, v) in row.iter().enumerate() {
                            confusion.counts[i][j] += v;
                        }
                    }
                }
                let classes = (0..c0.classes.len())
                    .map(|k| ClassScores {
                        name: c0.classes[k].name.clone(),
                        precision: avg(&|r| r.classes[k].precision),
                        recall: avg(&|r| r.classes[k].recall),
                        f1: avg(&|r| r.classes[k].f1),
                        support: reports.iter().map(|r| r.classes[k].support).sum(),
                        precision_undefined: reports.iter().all(|r| r.classes[k].precision_undefined),
                        recall_undefined: reports.iter().all(|r| r.classes[k].recall_undefined),
                    })
                    .collect();
                Ok(EvalMetrics::Classification(ClassificationReport {
                    accuracy: avg(&|r| r.accuracy),
                    classes,
                    macro_precision: avg(&|r| r.macro_precision),
                    macro_recall: avg(&|r| r.macro_recall),
                    macro_f1: avg(&|r| r.macro_f1),
                    confusion,
                }))
            }
            EvalMetrics::Regression(_) => {
                let evals: Vec<&RegressionEval> = all
                    .iter()
                    .map(|m| match m {
                        EvalMetrics::Regression(r) => Ok(r),
                        _ => Err(Error::arg("mixed metric kinds")),
                    })
                    .collect::<Result<_>>()?;
                let avg = |f: fn(&RegressionEval) -> f64| evals.iter().map(|e| f(e)).sum::<f64>() / n;
                Ok(EvalMetrics::Regression(RegressionEval {
                    mse: avg(|e| e.mse),
                    rmse: avg(|e| e.rmse),
                    mae: avg(|e| e.mae),
                    r2: avg(|e| e.r2),
                    r2_undefined: evals.iter().any(|e| e.r2_undefined),
                }))
            }
        }
    }
}

/// Size, speed and quality of one trained model, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub param_count: usize,
    pub train_seconds: f64,
    pub infer_seconds: f64,
    pub epochs_run: usize,
    /// No epochs were recorded, so `train_seconds` carries no meaning.
    pub untrained: bool,
    pub reference_param_count: Option<usize>,
    pub matches_reference: Option<bool>,
    pub metrics: EvalMetrics,
}

pub fn summarize_model(
    name: &str,
    net: &Network,
    history: &crate::training::TrainHistory,
    eval: EvalMetrics,
    infer_seconds: f64,
    reference_param_count: Option<usize>,
) -> ModelSummary {
    let param_count = net.parameter_count();
    let epochs_run = history.train_loss.len();
    ModelSummary {
        name: name.to_string(),
        param_count,
        train_seconds: history.wall_clock_seconds,
        infer_seconds,
        epochs_run,
        untrained: epochs_run == 0,
        reference_param_count,
        matches_reference: reference_param_count.map(|r| r == param_count),
        metrics: eval,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO: [&str; 2] = ["a", "b"];

    #[test]
    fn perfect_classification() {
        let y = [0, 1, 2, 3, 1, 0];
        let r = classification_metrics(&y, &y, &SEVERITY_NAMES).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in &r.classes {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn hand_counted_binary_case() {
        // class 0: TP=3, FP=1, FN=2
        let truth = [0, 0, 0, 1, 0, 0];
        let pred = [0, 0, 0, 0, 1, 1];
        let r = classification_metrics(&pred, &truth, &TWO).unwrap();
        let c = &r.classes[0];
        assert!((c.precision - 0.75).abs() < 1e-12);
        assert!((c.recall - 0.6).abs() < 1e-12);
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_flagged() {
        let r = classification_metrics(&[0, 1, 0], &[0, 1, 1], &SEVERITY_NAMES).unwrap();
        let high = &r.classes[3];
        assert!(high.absent());
        assert_eq!((high.precision, high.recall, high.f1), (0.0, 0.0, 0.0));
        assert!(!r.classes[0].absent());
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(classification_metrics(&[], &[], &TWO), Err(Error::Argument(_))));
        assert!(matches!(regression_metrics(&[], &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn regression_identity() {
        let r = regression_metrics(&[1.0, 4.0, 2.5], &[1.0, 4.0, 2.5]).unwrap();
        assert_eq!((r.mse, r.rmse, r.mae, r.r2), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn regression_constant_targets() {
        let r = regression_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((r.mse - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mae - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.r2_undefined);
        assert_eq!(r.r2, 0.0);
    }

    #[test]
    fn regression_hand_case() {
        let r = regression_metrics(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        assert!((r.mse - 5.0).abs() < 1e-12);
        assert!((r.rmse - 5f64.sqrt()).abs() < 1e-12);
        assert!((r.mae - 2.0).abs() < 1e-12);
        assert!((r.r2 + 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_total(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = classification_metrics(&pred, &truth, &SEVERITY_NAMES).unwrap();
            prop_assert_eq!(r.accuracy, r.confusion.trace() as f64 / r.confusion.total() as f64);
            // micro recall
            let tp: u64 = (0..4).map(|c| r.confusion.counts[c][c]).sum();
            let support: u64 = r.classes.iter().map(|c| c.support).sum();
            prop_assert!((tp as f64 / support as f64 - r.accuracy).abs() < 1e-15);
            for c in &r.classes {
                prop_assert!((0.0..=1.0).contains(&c.precision));
                prop_assert!((0.0..=1.0).contains(&c.recall));
                prop_assert!((0.0..=1.0).contains(&c.f1));
            }
        }

        #[test]
        fn regression_invariants(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)) {
            let (pred, t): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let r = regression_metrics(&pred, &t).unwrap();
            prop_assert!((r.rmse * r.rmse - r.mse).abs() < 1e-12 * (1.0 + r.mse));
            prop_assert!(r.mae <= r.rmse + 1e-12);
            prop_assert!(r.r2 <= 1.0);
            let mut rev = pairs.clone();
            rev.reverse();
            let (p2, t2): (Vec<_>, Vec<_>) = rev.into_iter().unzip();
            let r2 = regression_metrics(&p2, &t2).unwrap();
            prop_assert!((r.mse - r2.mse).abs() < 1e-12);
            prop_assert!((r.r2 - r2.r2).abs() < 1e-9);
        }
    }
}
