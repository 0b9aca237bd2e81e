use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Per-feature min and max of the training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Statistics over every timestep of every window in `train`.
    pub fn fit(train: &WindowedDataset) -> Result<NormStats> {
        if train.normalization.is_some() {
            return Err(Error::arg("cannot fit statistics on already normalized windows"));
        }
        if train.is_empty() {
            return Err(Error::arg("cannot fit normalization on zero windows"));
        }
        let f = train.n_features();
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        for row in train.windows.as_slice().chunks_exact(f) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(NormStats { min, max })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    /// Scaled value of feature `j`; constant features map to 0.
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    pub fn project(&self, features: &[usize]) -> NormStats {
        NormStats {
            min: features.iter().map(|&j| self.min[j]).collect(),
            max: features.iter().map(|&j| self.max[j]).collect(),
        }
    }
}

/// Min-max scale every feature with `stats`.
///
/// Windows already scaled with the same statistics are returned unchanged;
/// windows scaled with different ones are an error. Values outside the
/// training range land outside `[0, 1]`; see [`out_of_range_count`].
pub fn normalize(data: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    if stats.len() != data.n_features() {
        return Err(Error::shape(format!(
            "statistics for {} features, data has {}",
            stats.len(),
            data.n_features()
        )));
    }
    match &data.normalization {
        Some(s) if s == stats => return Ok(data.clone()),
        Some(_) => return Err(Error::arg("windows were normalized with different statistics")),
        None => {}
    }
    let f = data.n_features();
    let scaled: Vec<f64> = data
        .windows
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &v)| stats.scale(k % f, v))
        .collect();
    let mut out = data.clone();
    out.windows = Tensor3::from_vec(data.windows.shape(), scaled)?;
    out.normalization = Some(stats.clone());
    Ok(out)
}

/// Number of scaled values outside `[0, 1]`.
pub fn out_of_range_count(data: &WindowedDataset) -> usize {
    data.windows
        .as_slice()
        .iter()
        .filter(|v| !(0.0..=1.0).contains(*v))
        .count()
}
