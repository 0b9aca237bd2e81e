use rand::seq::SliceRandom;

use super::WindowedDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Seeded shuffle of `0..n`, then the first `round(ratio * n)` go to train.
/// Both index lists come back sorted.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::arg(format!("need at least 2 samples to split, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::arg(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(data: &WindowedDataset, ratio: f64, seed: u64) -> Result<(WindowedDataset, WindowedDataset)> {
    let (train, test) = split_indices(data.len(), ratio, seed)?;
    Ok((data.select(&train), data.select(&test)))
}

/// Test-fold indices of a seeded k-fold partition.
///
/// Row-level folds differ in size by at most one, with the larger folds
/// first. With `groups`, whole groups are dealt to the currently smallest
/// fold so that no group straddles two folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64, groups: Option<&[usize]>) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::arg(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::arg(format!("{k} folds requested for {n} samples")));
    }
    let mut rng = seed::rng(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    match groups {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (base, extra) = (n / k, n % k);
            let mut start = 0;
            for (i, fold) in folds.iter_mut().enumerate() {
                let size = base + usize::from(i < extra);
                fold.extend_from_slice(&idx[start..start + size]);
                start += size;
            }
        }
        Some(groups) => {
            if groups.len() != n {
                return Err(Error::shape("one group id per sample required"));
            }
            let mut ids: Vec<usize> = groups.to_vec();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() < k {
                return Err(Error::arg(format!("{k} folds requested for {} groups", ids.len())));
            }
            ids.shuffle(&mut rng);
            let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &g) in groups.iter().enumerate() {
                members.entry(g).or_default().push(i);
            }
            for g in ids {
                let target = (0..k).min_by_key(|&f| (folds[f].len(), f)).unwrap();
                folds[target].extend_from_slice(&members[&g]);
            }
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}
