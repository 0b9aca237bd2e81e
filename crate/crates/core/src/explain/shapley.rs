use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use super::{check_inputs, coalition_values, Attribution, Background, Model};
use crate::error::{Error, Result};
use crate::seed;

/// Largest feature count the exact estimator enumerates (2^F coalitions).
pub const EXACT_FEATURE_LIMIT: usize = 20;

/// Exact Shapley values for every model output.
pub fn exact_shapley_all(model: &dyn Model, sample: ArrayView2<'_, f64>, background: &Background) -> Result<Vec<Attribution>> {
    check_inputs(model, sample, background)?;
    let f = sample.ncols();
    if f > EXACT_FEATURE_LIMIT {
        return Err(Error::Capacity {
            features: f,
            limit: EXACT_FEATURE_LIMIT,
        });
    }
    let full = (1u64 << f) - 1;
    let masks: Vec<u64> = (0..=full).collect();
    let v = coalition_values(model, sample, background, &masks)?;
    // |S|!(F-|S|-1)!/F! = 1 / (F * C(F-1, |S|))
    let mut weight = vec![0.0; f];
    let mut binom = 1.0;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (f as f64 * binom);
        binom = binom * (f - 1 - s) as f64 / (s + 1) as f64;
    }
    Ok((0..model.n_outputs())
        .map(|o| {
            let mut phi = vec![0.0; f];
            for s in 0..=full {
                let size = s.count_ones() as usize;
                if size == f {
                    continue;
                }
                let w = weight[size];
                for (i, p) in phi.iter_mut().enumerate() {
                    if s >> i & 1 == 0 {
                        *p += w * (v[[(s | 1 << i) as usize, o]] - v[[s as usize, o]]);
                    }
                }
            }
            Attribution {
                sample_id: 0,
                output_index: o,
                phi,
                base_value: v[[0, o]],
                value: v[[full as usize, o]],
                std_errors: vec![0.0; f],
            }
        })
        .collect())
}

pub fn exact_shapley(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    background: &Background,
    target_output: usize,
) -> Result<Attribution> {
    pick(exact_shapley_all(model, sample, background)?, target_output)
}

fn pick(mut all: Vec<Attribution>, target: usize) -> Result<Attribution> {
    if target >= all.len() {
        return Err(Error::arg(format!("output {target} outside {} outputs", all.len())));
    }
    Ok(all.swap_remove(target))
}

/// `f!`, or `None` past `usize::MAX`.
fn factorial(f: usize) -> Option<usize> {
    (2..=f).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// Next permutation in lexicographic order; false after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Permutation-sampling Shapley values for every model output.
///
/// Each permutation adds features one at a time and credits each with the
/// change in output. Asking for exactly `F!` permutations walks every one of
/// them once, which gives the exact values and zero standard errors; any
/// other count draws permutations independently at random.
pub fn sampled_shapley_all(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    background: &Background,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<Attribution>> {
    check_inputs(model, sample, background)?;
    if n_permutations == 0 {
        return Err(Error::arg("n_permutations must be at least 1"));
    }
    let f = sample.ncols();
    let outputs = model.n_outputs();
    let exhaustive = factorial(f) == Some(n_permutations);
    let perms: Vec<Vec<usize>> = if exhaustive {
        let mut p: Vec<usize> = (0..f).collect();
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        all
    } else {
        let mut rng = seed::rng(seed);
        (0..n_permutations)
            .map(|_| {
                let mut p: Vec<usize> = (0..f).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    };

    let full = if f == 64 { u64::MAX } else { (1u64 << f) - 1 };
    let ends = coalition_values(model, sample, background, &[0, full])?;
    // Welford accumulators per (output, feature)
    let mut mean = vec![vec![0.0; f]; outputs];
    let mut m2 = vec![vec![0.0; f]; outputs];
    let mut seen = 0.0;
    const PERMS_PER_CALL: usize = 64;
    for group in perms.chunks(PERMS_PER_CALL) {
        let mut masks = Vec::with_capacity(group.len() * f.saturating_sub(1));
        for p in group {
            let mut m = 0u64;
            for &j in &p[..f - 1] {
                m |= 1 << j;
                masks.push(m);
            }
        }
        let v = coalition_values(model, sample, background, &masks)?;
        for (g, p) in group.iter().enumerate() {
            seen += 1.0;
            for o in 0..outputs {
                let mut prev = ends[[0, o]];
                for (k, &j) in p.iter().enumerate() {
                    let cur = if k + 1 == f { ends[[1, o]] } else { v[[g * (f - 1) + k, o]] };
                    let x = cur - prev;
                    let d = x - mean[o][j];
                    mean[o][j] += d / seen;
                    m2[o][j] += d * (x - mean[o][j]);
                    prev = cur;
                }
            }
        }
    }
    Ok((0..outputs)
        .map(|o| Attribution {
            sample_id: 0,
            output_index: o,
            phi: mean[o].clone(),
            base_value: ends[[0, o]],
            value: ends[[1, o]],
            std_errors: if exhaustive || seen < 2.0 {
                vec![0.0; f]
            } else {
                m2[o].iter().map(|s| (s / (seen - 1.0) / seen).sqrt()).collect()
            },
        })
        .collect())
}

pub fn sampled_shapley(
    model: &dyn Model,
    sample: ArrayView2<'_, f64>,
    background: &Background,
    n_permutations: usize,
    seed: u64,
    target_output: usize,
) -> Result<Attribution> {
    pick(
        sampled_shapley_all(model, sample, background, n_permutations, seed)?,
        target_output,
    )
}
