use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{RawDataset, SeverityThresholds};
use crate::error::{Error, Result};
use crate::seed;

const NAMED: [&str; 19] = [
    "NrmRightEyeOriginZ",
    "NrmLeftEyeOriginY",
    "NrmRightEyeOriginX",
    "NrmRightEyeOriginY",
    "NrmLeftEyeOriginZ",
    "GazeOriginWrldSpc_Y",
    "NrmLeftEyeOriginX",
    "HeadQRotationW",
    "HeadQRotationY",
    "NrmSRLeftEyeGazeDirX",
    "HeadEulX",
    "HeadEulZ",
    "NrmSRLeftEyeGazeDirY",
    "NrmSRRightEyeGazeDirY",
    "GazeOriginWrldSpc_Z",
    "GazeDirectionWrldSpc_Z",
    "RightPupilDiameter",
    "GazeOriginLclSpc_Z",
    "HeadEulY",
];

/// Sensor-style column names; past the named channels they are `SensorNN`.
pub fn default_feature_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match NAMED.get(i) {
            Some(s) => s.to_string(),
            None => format!("Sensor{i:02}"),
        })
        .collect()
}

/// Weights of the planted features: magnitude `1 - 0.1 i` (at least 0.5)
/// with alternating sign.
pub fn informative_weights(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let m = (1.0 - 0.1 * i as f64).max(0.5);
            if i % 2 == 0 {
                m
            } else {
                -m
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_sessions: usize,
    pub rows_per_session: usize,
    pub n_features: usize,
    pub informative_indices: Vec<usize>,
    /// One per informative feature; `None` uses [`informative_weights`].
    pub weights: Option<Vec<f64>>,
    pub noise_std: f64,
    /// AR(1) coefficient of every feature stream.
    pub autocorrelation: f64,
    pub thresholds: SeverityThresholds,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_sessions: 24,
            rows_per_session: 100,
            n_features: 12,
            informative_indices: vec![2, 5, 9],
            weights: None,
            noise_std: 0.1,
            autocorrelation: 0.9,
            thresholds: SeverityThresholds::default(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sessions == 0 || self.rows_per_session == 0 || self.n_features == 0 {
            return bad("sessions, rows per session and features must be positive".into());
        }
        if self.informative_indices.is_empty() {
            return bad("at least one informative feature is required".into());
        }
        if let Some(&j) = self.informative_indices.iter().find(|&&j| j >= self.n_features) {
            return bad(format!("informative index {j} outside {} features", self.n_features));
        }
        let mut seen = self.informative_indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.informative_indices.len() {
            return bad("informative indices repeat".into());
        }
        if let Some(w) = &self.weights {
            if w.len() != self.informative_indices.len() || w.iter().any(|v| !v.is_finite()) {
                return bad("need one finite weight per informative feature".into());
            }
            if w.iter().all(|&v| v == 0.0) {
                return bad("weights are all zero".into());
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std {} must be finite and non-negative", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.autocorrelation) {
            return bad(format!("autocorrelation {} outside [0, 1)", self.autocorrelation));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| informative_weights(self.informative_indices.len()))
    }
}

/// Generate sessions of AR(1) sensor streams with a planted FMS signal.
///
/// Each feature `j` is `offset_j + scale_j * x_j(t)` where `x_j` is a
/// unit-variance AR(1) stream. The latent score is
/// `z = sum_k w_k x_k / |w| + noise_std * e`, and `FMS = clamp(4.5 + 3 z, 0, 10)`.
pub fn synthesize(spec: &SyntheticSpec) -> Result<RawDataset> {
    spec.validate()?;
    let weights = spec.weights();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let rho = spec.autocorrelation;
    let innovation = (1.0 - rho * rho).sqrt();
    let f = spec.n_features;
    let total = spec.n_sessions * spec.rows_per_session;
    let mut raw = RawDataset {
        feature_names: default_feature_names(f),
        rows: Vec::with_capacity(total),
        fms: Vec::with_capacity(total),
        severity: Vec::with_capacity(total),
        session_ids: Vec::with_capacity(total),
    };
    for s in 0..spec.n_sessions {
        let mut streams: Vec<_> = (0..f).map(|j| seed::rng(seed::derive(spec.seed, &[s as u64, j as u64]))).collect();
        let mut noise = seed::rng(seed::derive(spec.seed, &[s as u64, u64::MAX]));
        let mut x: Vec<f64> = streams.iter_mut().map(|r| r.sample(StandardNormal)).collect();
        for t in 0..spec.rows_per_session {
            if t > 0 {
                for (xj, r) in x.iter_mut().zip(streams.iter_mut()) {
                    let e: f64 = r.sample(StandardNormal);
                    *xj = rho * *xj + innovation * e;
                }
            }
            let e: f64 = noise.sample(StandardNormal);
            let signal: f64 = spec
                .informative_indices
                .iter()
                .zip(&weights)
                .map(|(&j, w)| w * x[j])
                .sum();
            let z = signal / norm + spec.noise_std * e;
            let fms = (4.5 + 3.0 * z).clamp(0.0, 10.0);
            raw.rows.push(
                x.iter()
                    .enumerate()
                    .map(|(j, v)| 0.5 * j as f64 + (1.0 + 0.1 * j as f64) * v)
                    .collect(),
            );
            raw.fms.push(fms);
            raw.severity.push(spec.thresholds.classify(fms));
            raw.session_ids.push(format!("S{s:03}"));
        }
    }
    Ok(raw)
}
