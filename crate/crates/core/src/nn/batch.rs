use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::spec::Task;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One-hot rows, `(samples, classes)`.
    Classes(Array2<f64>),
    /// FMS scores in `[0, 10]`.
    Fms(Vec<f64>),
}

/// Inputs paired with exactly one kind of target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Tensor3,
    pub targets: Targets,
    /// Optional session index per sample, used for grouped folds.
    pub groups: Option<Vec<usize>>,
}

impl LabeledBatch {
    pub fn classification(inputs: Tensor3, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != inputs.batch() {
            return Err(Error::shape(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.batch()
            )));
        }
        let mut one_hot = Array2::zeros((labels.len(), classes));
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(Error::arg(format!("label {c} outside {classes} classes")));
            }
            one_hot[[i, c]] = 1.0;
        }
        Ok(LabeledBatch {
            inputs,
            targets: Targets::Classes(one_hot),
            groups: None,
        })
    }

    pub fn from_one_hot(inputs: Tensor3, one_hot: Array2<f64>) -> Result<Self> {
        if one_hot.nrows() != inputs.batch() {
            return Err(Error::shape("one-hot rows do not match batch size"));
        }
        for (i, row) in one_hot.axis_iter(Axis(0)).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::arg(format!("row {i} is not one-hot")));
            }
        }
        Ok(LabeledBatch {
            inputs,
            targets: Targets::Classes(one_hot),
            groups: None,
        })
    }

    pub fn regression(inputs: Tensor3, fms: Vec<f64>) -> Result<Self> {
        if fms.len() != inputs.batch() {
            return Err(Error::shape(format!(
                "{} targets for {} samples",
                fms.len(),
                inputs.batch()
            )));
        }
        if let Some(v) = fms.iter().find(|v| !(0.0..=10.0).contains(*v)) {
            return Err(Error::arg(format!("FMS target {v} outside [0, 10]")));
        }
        Ok(LabeledBatch {
            inputs,
            targets: Targets::Fms(fms),
            groups: None,
        })
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::shape("group ids do not match batch size"));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Classes(_) => Task::Classification,
            Targets::Fms(_) => Task::Regression,
        }
    }

    pub fn class_count(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes(m) => Some(m.ncols()),
            Targets::Fms(_) => None,
        }
    }

    /// Arg-max of each one-hot row. Empty for regression batches.
    pub fn class_indices(&self) -> Vec<usize> {
        match &self.targets {
            Targets::Classes(m) => m.axis_iter(Axis(0)).map(|r| argmax(r.iter())).collect(),
            Targets::Fms(_) => Vec::new(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> LabeledBatch {
        let targets = match &self.targets {
            Targets::Classes(m) => Targets::Classes(m.select(Axis(0), indices)),
            Targets::Fms(v) => Targets::Fms(indices.iter().map(|&i| v[i]).collect()),
        };
        LabeledBatch {
            inputs: self.inputs.select(indices),
            targets,
            groups: self
                .groups
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
        }
    }

    pub fn select_features(&self, features: &[usize]) -> LabeledBatch {
        LabeledBatch {
            inputs: self.inputs.select_features(features),
            targets: self.targets.clone(),
            groups: self.groups.clone(),
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
