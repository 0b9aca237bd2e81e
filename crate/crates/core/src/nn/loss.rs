use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};

/// Probabilities are clamped here before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mean categorical cross-entropy over the rows of `pred`.
pub fn categorical_cross_entropy(pred: ArrayView2<'_, f64>, labels: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != labels.dim() {
        return Err(Error::shape(format!(
            "predictions {:?} vs labels {:?}",
            pred.dim(),
            labels.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::arg("empty batch"));
    }
    for (i, row) in pred.axis_iter(Axis(0)).enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::arg(format!("prediction row {i} sums to {s}")));
        }
    }
    let total: f64 = pred
        .iter()
        .zip(labels.iter())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(LOG_CLAMP).ln())
        .sum();
    Ok(total / pred.nrows() as f64)
}

pub fn rmse_loss(pred: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(mean_squared_error(pred, targets)?.sqrt())
}

pub(crate) fn mean_squared_error(pred: &[f64], targets: &[f64]) -> Result<f64> {
    if pred.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions vs {} targets",
            pred.len(),
            targets.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::arg("empty prediction vector"));
    }
    let sse: f64 = pred
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / pred.len() as f64)
}
