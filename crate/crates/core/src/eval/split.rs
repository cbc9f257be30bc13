//! Outcome- and modality-stratified train/validation/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.70, 0.10, 0.20];
pub const MIN_SUBGROUP: usize = 10;

#[derive(Debug, Clone)]
pub struct SplitUnit {
    pub stay_id: String,
    pub subgroup: String,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSplit {
    pub subgroup: String,
    /// `[train, val, test]` counts of positives and of negatives.
    pub positives: [usize; 3],
    pub negatives: [usize; 3],
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub subgroups: Vec<SubgroupSplit>,
    pub warnings: Vec<String>,
}

/// Integer allocation of `n` by `fractions`: floors, then the remainder to the
/// largest fractional parts (earlier parts win ties).
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

pub fn stratified_split(units: &[SplitUnit], fractions: [f64; 3], seed: u64) -> Result<Split> {
    if units.is_empty() {
        return Err(Error::Data("cannot split an empty cohort".into()));
    }
    if fractions.iter().any(|f| *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let mut groups: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for u in units {
        let g = groups.entry(&u.subgroup).or_default();
        if u.label {
            g.0.push(&u.stay_id);
        } else {
            g.1.push(&u.stay_id);
        }
    }
    let mut parts: [Vec<String>; 3] = Default::default();
    let mut out_groups = Vec::new();
    let mut warnings = Vec::new();
    for (key, (mut pos, mut neg)) in groups {
        let stratified = pos.len() + neg.len() >= MIN_SUBGROUP;
        if !stratified {
            warnings.push(format!(
                "subgroup `{key}` has {} stays, fewer than {MIN_SUBGROUP}; assigned to train",
                pos.len() + neg.len()
            ));
        }
        let mut counts = [[0usize; 3]; 2];
        for (class, ids) in [(0usize, &mut pos), (1, &mut neg)] {
            ids.sort_unstable();
            let mut rng = rng_for(seed, &format!("split/{key}/{class}"));
            ids.shuffle(&mut rng);
            let alloc = if stratified {
                largest_remainder(ids.len(), &fractions)
            } else {
                vec![ids.len(), 0, 0]
            };
            let mut start = 0;
            for (p, c) in alloc.iter().enumerate() {
                parts[p].extend(ids[start..start + c].iter().map(|s| s.to_string()));
                counts[class][p] = *c;
                start += c;
            }
        }
        out_groups.push(SubgroupSplit {
            subgroup: key.to_string(),
            positives: counts[0],
            negatives: counts[1],
            stratified,
        });
    }
    for p in parts.iter_mut() {
        p.sort();
    }
    let [train, val, test] = parts;
    Ok(Split {
        train,
        val,
        test,
        subgroups: out_groups,
        warnings,
    })
}
