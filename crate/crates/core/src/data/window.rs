use ndarray::Array3;

use super::{NormStats, RawDataset, Severity};
use crate::error::{Error, Result};
use crate::nn::{LabeledBatch, Task};
use crate::tensor::Tensor3;

/// Fixed-length windows cut from sessions, labelled at their last row.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Tensor3,
    pub labels: Vec<Severity>,
    pub targets: Vec<f64>,
    /// Index of the source session (in order of first appearance).
    pub sessions: Vec<usize>,
    /// Raw row index of each window's last row.
    pub end_rows: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Set once the windows have been scaled.
    pub normalization: Option<NormStats>,
}

/// Windows a session of `len` rows yields.
pub fn window_count(len: usize, timesteps: usize, stride: usize) -> usize {
    if len < timesteps || timesteps == 0 || stride == 0 {
        0
    } else {
        (len - timesteps) / stride + 1
    }
}

pub fn make_windows(raw: &RawDataset, timesteps: usize, stride: usize) -> Result<WindowedDataset> {
    if timesteps == 0 || stride == 0 {
        return Err(Error::arg("timesteps and stride must be at least 1"));
    }
    raw.validate()?;
    let sessions = raw.sessions();
    let n: usize = sessions.iter().map(|s| window_count(s.len(), timesteps, stride)).sum();
    let f = raw.n_features();
    let mut data = Array3::zeros((n, timesteps, f));
    let mut out = WindowedDataset {
        windows: Tensor3::zeros((0, timesteps, f)),
        labels: Vec::with_capacity(n),
        targets: Vec::with_capacity(n),
        sessions: Vec::with_capacity(n),
        end_rows: Vec::with_capacity(n),
        feature_names: raw.feature_names.clone(),
        normalization: None,
    };
    let mut w = 0;
    for (s, range) in sessions.iter().enumerate() {
        let mut start = range.start;
        while start + timesteps <= range.end {
            for t in 0..timesteps {
                for (j, &v) in raw.rows[start + t].iter().enumerate() {
                    data[[w, t, j]] = v;
                }
            }
            let last = start + timesteps - 1;
            out.labels.push(raw.severity[last]);
            out.targets.push(raw.fms[last]);
            out.sessions.push(s);
            out.end_rows.push(last);
            w += 1;
            start += stride;
        }
    }
    out.windows = Tensor3::from_array(data)?;
    Ok(out)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timesteps(&self) -> usize {
        self.windows.timesteps()
    }

    pub fn n_features(&self) -> usize {
        self.windows.features()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            windows: self.windows.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            sessions: indices.iter().map(|&i| self.sessions[i]).collect(),
            end_rows: indices.iter().map(|&i| self.end_rows[i]).collect(),
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Keep only the given feature columns, in the given order.
    pub fn project(&self, features: &[usize]) -> Result<WindowedDataset> {
        if let Some(&bad) = features.iter().find(|&&j| j >= self.n_features()) {
            return Err(Error::arg(format!(
                "feature index {bad} outside {} features",
                self.n_features()
            )));
        }
        Ok(WindowedDataset {
            windows: self.windows.select_features(features),
            feature_names: features.iter().map(|&j| self.feature_names[j].clone()).collect(),
            normalization: self.normalization.as_ref().map(|n| n.project(features)),
            labels: self.labels.clone(),
            targets: self.targets.clone(),
            sessions: self.sessions.clone(),
            end_rows: self.end_rows.clone(),
        })
    }

    pub fn to_labeled(&self, task: Task) -> Result<LabeledBatch> {
        let batch = match task {
            Task::Classification => {
                LabeledBatch::classification(self.windows.clone(), &self.label_indices(), Severity::ALL.len())?
            }
            Task::Regression => LabeledBatch::regression(self.windows.clone(), self.targets.clone())?,
        };
        batch.with_groups(self.sessions.clone())
    }
}
