//! Shapley attributions over whole feature channels.
//!
//! A player is one feature column across every timestep. Features outside a
//! coalition are replaced by background values, either the per-feature
//! training mean or, averaged, a set of background windows.

mod rank;
mod shapley;

#[cfg(test)]
mod tests;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor3;

pub use rank::{
    build_background, local_explanation, rank_features, write_local_records, write_ranking_csv, Aggregation, FeatureRanking,
    LocalExplanation, LocalRecord, RankConfig, RankedFeature,
};
pub use shapley::{exact_shapley, exact_shapley_all, sampled_shapley, sampled_shapley_all, EXACT_FEATURE_LIMIT};

/// Anything that maps a batch of windows to per-window outputs.
pub trait Model: Sync {
    fn n_features(&self) -> usize;
    fn n_outputs(&self) -> usize;
    /// `(batch, n_outputs)` outputs for `x`.
    fn eval(&self, x: &Tensor3) -> Result<Array2<f64>>;
}

impl Model for Network {
    fn n_features(&self) -> usize {
        self.spec().input_features
    }

    fn n_outputs(&self) -> usize {
        self.outputs()
    }

    fn eval(&self, x: &Tensor3) -> Result<Array2<f64>> {
        self.predict(x)
    }
}

/// A model given as a closure over one `(timesteps, features)` window.
pub struct FnModel<F> {
    pub features: usize,
    pub outputs: usize,
    pub f: F,
}

impl<F> FnModel<F>
where
    F: Fn(ArrayView2<'_, f64>) -> Vec<f64> + Sync,
{
    pub fn new(features: usize, outputs: usize, f: F) -> Self {
        FnModel { features, outputs, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(ArrayView2<'_, f64>) -> Vec<f64> + Sync,
{
    fn n_features(&self) -> usize {
        self.features
    }

    fn n_outputs(&self) -> usize {
        self.outputs
    }

    fn eval(&self, x: &Tensor3) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.batch(), self.outputs));
        for i in 0..x.batch() {
            let y = (self.f)(x.window(i));
            if y.len() != self.outputs {
                return Err(Error::shape(format!("model returned {} outputs, expected {}", y.len(), self.outputs)));
            }
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(out)
    }
}

/// Replacement values for features outside a coalition.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    /// Per-feature value used at every timestep.
    pub values: Vec<f64>,
    /// When set, masked outputs are averaged over these windows instead.
    pub windows: Option<Tensor3>,
}

impl Background {
    pub fn from_values(values: Vec<f64>) -> Result<Background> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("background needs finite values for at least one feature"));
        }
        Ok(Background { values, windows: None })
    }

    /// Per-feature mean over every timestep of every training window.
    pub fn mean_of(x_train: &Tensor3) -> Result<Background> {
        if x_train.batch() == 0 {
            return Err(Error::arg("background needs at least one training window"));
        }
        let f = x_train.features();
        let mut sums = vec![0.0; f];
        for row in x_train.as_slice().chunks_exact(f) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = (x_train.batch() * x_train.timesteps()) as f64;
        Background::from_values(sums.into_iter().map(|s| s / n).collect())
    }

    /// Average over explicit background windows.
    pub fn with_windows(mut self, windows: Tensor3) -> Result<Background> {
        if windows.features() != self.values.len() || windows.batch() == 0 {
            return Err(Error::shape("background windows must match the feature count"));
        }
        self.windows = Some(windows);
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    fn references(&self) -> usize {
        self.windows.as_ref().map_or(1, Tensor3::batch)
    }
}

/// Coalitions are bitsets over at most this many features.
pub const MAX_FEATURES: usize = 64;

pub(crate) fn check_inputs(model: &dyn Model, sample: ArrayView2<'_, f64>, background: &Background) -> Result<()> {
    let f = sample.ncols();
    if f != model.n_features() || f != background.n_features() {
        return Err(Error::shape(format!(
            "sample has {f} features, model {} and background {}",
            model.n_features(),
            background.n_features()
        )));
    }
    if f > MAX_FEATURES {
        return Err(Error::arg(format!("at most {MAX_FEATURES} features can be attributed")));
    }
    if let Some(w) = &background.windows {
        if w.timesteps() != sample.nrows() {
            return Err(Error::shape("background windows and sample differ in timesteps"));
        }
    }
    Ok(())
}

/// Outputs for every coalition in `masks` (bit `j` set keeps feature `j`).
///
/// Rows of the result follow `masks`. Model calls are batched.
pub(crate) fn coalition_values(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    background: &Background,
    masks: &[u64],
) -> Result<Array2<f64>> {
    const CHUNK_WINDOWS: usize = 2048;
    let (t, f) = sample.dim();
    let refs = background.references();
    let per_chunk = (CHUNK_WINDOWS / refs).max(1);
    let mut out = Array2::zeros((masks.len(), model.n_outputs()));
    for (c, chunk) in masks.chunks(per_chunk).enumerate() {
        let mut batch = Array3::zeros((chunk.len() * refs, t, f));
        for (m, &mask) in chunk.iter().enumerate() {
            for r in 0..refs {
                let mut w = batch.index_axis_mut(Axis(0), m * refs + r);
                for j in 0..f {
                    let keep = mask >> j & 1 == 1;
                    for s in 0..t {
                        w[[s, j]] = if keep {
                            sample[[s, j]]
                        } else {
                            match &background.windows {
                                Some(bw) => bw.as_array()[[r, s, j]],
                                None => background.values[j],
                            }
                        };
                    }
                }
            }
        }
        let y = model.eval(&Tensor3::from_array(batch)?)?;
        for m in 0..chunk.len() {
            let mut row = out.row_mut(c * per_chunk + m);
            for r in 0..refs {
                row += &y.row(m * refs + r);
            }
            row /= refs as f64;
        }
    }
    Ok(out)
}

/// Model outputs with only the features in `coalition` observed.
pub fn mask_and_eval(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    coalition: &[usize],
    background: &Background,
) -> Result<Vec<f64>> {
    check_inputs(model, sample, background)?;
    let mut mask = 0u64;
    for &j in coalition {
        if j >= sample.ncols() {
            return Err(Error::arg(format!("feature {j} outside {} features", sample.ncols())));
        }
        mask |= 1 << j;
    }
    Ok(coalition_values(model, sample, background, &[mask])?.row(0).to_vec())
}

/// Shapley values of one model output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub sample_id: usize,
    /// Class index, or 0 for the regression head.
    pub output_index: usize,
    pub phi: Vec<f64>,
    /// Output with every feature replaced by the background.
    pub base_value: f64,
    /// Output on the sample itself.
    pub value: f64,
    /// Standard error of each `phi`; zero for exact results.
    pub std_errors: Vec<f64>,
}

impl Attribution {
    /// `value - base_value - sum(phi)`.
    pub fn efficiency_gap(&self) -> f64 {
        self.value - self.base_value - self.phi.iter().sum::<f64>()
    }
}

/// Which Shapley estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Estimator {
    Exact,
    Sampled { n_permutations: usize, seed: u64 },
}

impl Estimator {
    /// All outputs of `model` for `sample`, one attribution per output.
    pub fn attribute(
        &self,
        model: &dyn Model,
        sample: ArrayView2<'_, f64>,
        background: &Background,
        sample_id: usize,
    ) -> Result<Vec<Attribution>> {
        let mut out = match *self {
            Estimator::Exact => exact_shapley_all(model, sample, background)?,
            Estimator::Sampled { n_permutations, seed } => {
                sampled_shapley_all(model, sample, background, n_permutations, per_sample_seed(seed, sample))?
            }
        };
        for a in &mut out {
            a.sample_id = sample_id;
        }
        Ok(out)
    }
}

/// Seed derived from the sample contents, so results do not depend on
/// where the sample sits in a batch.
pub fn per_sample_seed(seed: u64, sample: ArrayView2<'_, f64>) -> u64 {
    let mut h = crate::seed::Fnv64::default();
    for v in sample.iter() {
        h.write(&v.to_le_bytes());
    }
    crate::seed::derive(seed, &[h.finish()])
}
