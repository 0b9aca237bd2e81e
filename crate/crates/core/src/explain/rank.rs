use std::io::{BufRead, Write};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Attribution, Background, Estimator, Model};
use crate::error::{Error, Result};
use crate::metrics::SEVERITY_NAMES;
use crate::nn::argmax;
use crate::tensor::Tensor3;

/// How per-output attributions are reduced to one importance per sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// |phi| of the output with the largest value (the predicted class).
    #[default]
    PredictedClass,
    /// Mean |phi| over all outputs.
    AllOutputs,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub aggregation: Aggregation,
    /// Number of evenly spaced training windows to average over as the
    /// background; 0 uses the per-feature training mean alone.
    pub background_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub name: String,
    pub importance: f64,
    /// 1 is the most important.
    pub rank: usize,
}

/// Features by descending importance; ties go to the lower index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn from_importances(names: &[String], importances: &[f64]) -> Result<FeatureRanking> {
        if names.len() != importances.len() {
            return Err(Error::shape("one name per importance required"));
        }
        if importances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("importances must be finite and non-negative"));
        }
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
        Ok(FeatureRanking {
            entries: order
                .into_iter()
                .enumerate()
                .map(|(r, i)| RankedFeature {
                    index: i,
                    name: names[i].clone(),
                    importance: importances[i],
                    rank: r + 1,
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Feature indices in rank order.
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    /// Rank (1-based) of feature `index`.
    pub fn rank_of(&self, index: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.index == index).map(|e| e.rank)
    }

    /// Read a `feature,importance,rank` table. Feature indices are recovered
    /// from `names`, the column order of the data.
    pub fn read_csv<R: BufRead>(input: R, names: &[String]) -> Result<FeatureRanking> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["feature", "importance", "rank"] {
            return Err(Error::Format(format!("unexpected ranking header {header:?}")));
        }
        let mut importances = vec![None; names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let name = &rec[0];
            let j = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            let v: f64 = rec[1].parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: "importance".into(),
                value: rec[1].to_string(),
            })?;
            importances[j] = Some(v);
        }
        let importances: Vec<f64> = importances
            .into_iter()
            .enumerate()
            .map(|(j, v)| v.ok_or_else(|| Error::Format(format!("ranking lacks feature `{}`", names[j]))))
            .collect::<Result<_>>()?;
        FeatureRanking::from_importances(names, &importances)
    }
}

pub fn write_ranking_csv<W: Write>(ranking: &FeatureRanking, mut out: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "importance", "rank"])?;
    for e in &ranking.entries {
        w.write_record([e.name.clone(), e.importance.to_string(), e.rank.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Background used by [`rank_features`]: the training mean, averaged over
/// `background_windows` evenly spaced training windows when nonzero.
pub fn build_background(x_train: &Tensor3, config: &RankConfig) -> Result<Background> {
    let bg = Background::mean_of(x_train)?;
    if config.background_windows == 0 {
        return Ok(bg);
    }
    let n = x_train.batch();
    let k = config.background_windows.min(n);
    let idx: Vec<usize> = (0..k).map(|i| i * n / k).collect();
    bg.with_windows(x_train.select(&idx))
}

/// Global ranking from mean |phi| over `x_test`.
///
/// Returns the ranking and the attributions it was built from (the
/// predicted-class ones, or every output with [`Aggregation::AllOutputs`]).
pub fn rank_features(
    model: &dyn Model,
    x_train: &Tensor3,
    x_test: &Tensor3,
    feature_names: &[String],
    estimator: Estimator,
    config: &RankConfig,
) -> Result<(FeatureRanking, Vec<Attribution>)> {
    if x_test.batch() == 0 {
        return Err(Error::arg("no test windows to explain"));
    }
    if feature_names.len() != x_test.features() {
        return Err(Error::shape("one feature name per column required"));
    }
    let background = build_background(x_train, config)?;
    let per_sample: Vec<Vec<Attribution>> = (0..x_test.batch())
        .into_par_iter()
        .map(|i| estimator.attribute(model, x_test.window(i), &background, i))
        .collect::<Result<_>>()?;

    let f = x_test.features();
    let mut columns = vec![Vec::with_capacity(per_sample.len()); f];
    let mut used = Vec::new();
    for attrs in per_sample {
        match config.aggregation {
            Aggregation::PredictedClass => {
                let a = attrs[predicted(&attrs)].clone();
                for (c, p) in columns.iter_mut().zip(&a.phi) {
                    c.push(p.abs());
                }
                used.push(a);
            }
            Aggregation::AllOutputs => {
                for (j, c) in columns.iter_mut().enumerate() {
                    c.push(attrs.iter().map(|a| a.phi[j].abs()).sum::<f64>() / attrs.len() as f64);
                }
                used.extend(attrs);
            }
        }
    }
    // sorted summation keeps the result independent of sample order
    let importances: Vec<f64> = columns
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c.iter().sum::<f64>() / c.len() as f64
        })
        .collect();
    Ok((FeatureRanking::from_importances(feature_names, &importances)?, used))
}

fn predicted(attrs: &[Attribution]) -> usize {
    argmax(attrs.iter().map(|a| &a.value))
}

/// Attributions of every output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub sample_id: usize,
    /// Output with the largest value.
    pub predicted: usize,
    pub attributions: Vec<Attribution>,
}

pub fn local_explanation(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    background: &Background,
    estimator: Estimator,
    sample_id: usize,
) -> Result<LocalExplanation> {
    let attributions = estimator.attribute(model, sample, background, sample_id)?;
    Ok(LocalExplanation {
        sample_id,
        predicted: predicted(&attributions),
        attributions,
    })
}

/// One line of `local.ndrecords`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub sample_id: usize,
    pub output_index: usize,
    pub output: String,
    pub predicted: bool,
    pub base_value: f64,
    pub value: f64,
    pub features: Vec<String>,
    pub phi: Vec<f64>,
}

fn output_name(index: usize, outputs: usize) -> String {
    match outputs {
        1 => "fms".into(),
        4 => SEVERITY_NAMES[index].into(),
        _ => format!("output{index}"),
    }
}

impl LocalExplanation {
    pub fn records(&self, feature_names: &[String], config_hash: Option<&str>) -> Vec<LocalRecord> {
        let outputs = self.attributions.len();
        self.attributions
            .iter()
            .map(|a| LocalRecord {
                config_hash: config_hash.map(str::to_string),
                sample_id: self.sample_id,
                output_index: a.output_index,
                output: output_name(a.output_index, outputs),
                predicted: a.output_index == self.predicted,
                base_value: a.base_value,
                value: a.value,
                features: feature_names.to_vec(),
                phi: a.phi.clone(),
            })
            .collect()
    }
}

/// One JSON object per line, one line per (sample, output).
pub fn write_local_records<W: Write>(
    explanations: &[LocalExplanation],
    feature_names: &[String],
    config_hash: Option<&str>,
    mut out: W,
) -> Result<()> {
    for e in explanations {
        for r in e.records(feature_names, config_hash) {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
