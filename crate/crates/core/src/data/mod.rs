//! Sensor tables, sliding windows, normalization and the synthetic generator.

mod cache;
mod csv_io;
mod norm;
mod split;
mod synth;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use norm::{normalize, out_of_range_count, NormStats};
pub use split::{kfold_indices, split_indices, split_train_test};
pub use synth::{default_feature_names, informative_weights, synthesize, SyntheticSpec};
pub use window::{make_windows, window_count, WindowedDataset};

/// Sickness severity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    None,
    Low,
    Medium,
    High,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::None, Severity::Low, Severity::Medium, Severity::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Severity> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        crate::metrics::SEVERITY_NAMES[self.index()]
    }

    /// Accepts the class name (any case) or its index `0..=3`.
    pub fn parse(s: &str) -> Option<Severity> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Self::from_index(i);
        }
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

/// FMS cut points: `fms <= none_max` is none, `(none_max, low_max]` low,
/// `(low_max, medium_max]` medium, the rest high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub none_max: f64,
    pub low_max: f64,
    pub medium_max: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        SeverityThresholds {
            none_max: 0.0,
            low_max: 3.0,
            medium_max: 6.0,
        }
    }
}

impl SeverityThresholds {
    pub fn classify(&self, fms: f64) -> Severity {
        if fms <= self.none_max {
            Severity::None
        } else if fms <= self.low_max {
            Severity::Low
        } else if fms <= self.medium_max {
            Severity::Medium
        } else {
            Severity::High
        }
    }
}

/// One row per sensor sample, in recording order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    /// `rows[i][j]` is feature `j` of sample `i`.
    pub rows: Vec<Vec<f64>>,
    pub fms: Vec<f64>,
    pub severity: Vec<Severity>,
    pub session_ids: Vec<String>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if self.fms.len() != n || self.severity.len() != n || self.session_ids.len() != n {
            return Err(Error::shape("row, FMS, severity and session columns differ in length"));
        }
        let f = self.n_features();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != f {
                return Err(Error::shape(format!("row {i} has {} features, expected {f}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Range {
                    row: i,
                    column: self.feature_names[j].clone(),
                    value: row[j],
                    reason: "not finite".into(),
                });
            }
        }
        for (i, &v) in self.fms.iter().enumerate() {
            if !(0.0..=10.0).contains(&v) {
                return Err(Error::Range {
                    row: i,
                    column: "FMS".into(),
                    value: v,
                    reason: "FMS must lie in [0, 10]".into(),
                });
            }
        }
        Ok(())
    }

    /// Contiguous runs of equal session id, as row ranges.
    pub fn sessions(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.session_ids.len() {
            if i == self.session_ids.len() || self.session_ids[i] != self.session_ids[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }
}
