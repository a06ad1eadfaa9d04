use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WindowedSample;
use crate::error::{Error, Result};

/// Indices of a leave-one-group-out split, as written next to a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub holdout: u32,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// `(train, test)` indices: test is every sample of group `holdout`.
pub fn split_indices(groups: &[u32], holdout: u32) -> Result<(Vec<usize>, Vec<usize>)> {
    if !groups.contains(&holdout) {
        return Err(Error::argument(format!("holdout group {holdout} does not occur in the dataset")));
    }
    Ok((0..groups.len()).partition(|&i| groups[i] != holdout))
}

/// Moves samples into `(train, test)` by group.
pub fn split(samples: Vec<WindowedSample>, holdout: u32) -> Result<(Vec<WindowedSample>, Vec<WindowedSample>)> {
    let groups: Vec<u32> = samples.iter().map(|s| s.group).collect();
    split_indices(&groups, holdout)?;
    Ok(samples.into_iter().partition(|s| s.group != holdout))
}

/// Picks a validation subset from `train` (indices into `groups`): for each
/// group, a contiguous run of `round(fraction · n_group)` of its samples at a
/// seeded offset. Contiguous runs keep heavily overlapping neighbours on the
/// same side. Returns `(train, validation)`, both sorted.
pub fn validation_holdout(
    groups: &[u32],
    train: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!("validation fraction {fraction} must be in [0, 1)")));
    }
    let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &i in train {
        let g = *groups
            .get(i)
            .ok_or_else(|| Error::argument(format!("train index {i} out of range")))?;
        by_group.entry(g).or_default().push(i);
    }
    let mut keep = Vec::with_capacity(train.len());
    let mut val = Vec::new();
    for (g, mut members) in by_group {
        members.sort_unstable();
        let k = (fraction * members.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(g));
        let offset = rng.gen_range(0..=members.len() - k);
        for (j, &i) in members.iter().enumerate() {
            if j >= offset && j < offset + k {
                val.push(i);
            } else {
                keep.push(i);
            }
        }
    }
    keep.sort_unstable();
    val.sort_unstable();
    Ok((keep, val))
}
