//! Metric reports broken down by group, outcome horizon and scorer disagreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{metric_report, point_metrics, BootstrapConfig, MetricReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReports {
    pub reports: BTreeMap<String, MetricReport>,
    /// Groups below the minimum size, with their sizes.
    pub skipped: BTreeMap<String, usize>,
}

fn subset<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

pub fn evaluate_by_group(
    scores: &[f64],
    labels: &[bool],
    keys: &[String],
    threshold: f64,
    min_n: usize,
    boot: Option<&BootstrapConfig>,
) -> Result<GroupReports> {
    if scores.len() != labels.len() || keys.len() != labels.len() {
        return Err(Error::Data("scores, labels and group keys differ in length".into()));
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        members.entry(k).or_default().push(i);
    }
    let mut out = GroupReports {
        reports: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    for (k, idx) in members {
        if idx.len() < min_n {
            out.skipped.insert(k.to_string(), idx.len());
            continue;
        }
        let (s, l) = (subset(scores, &idx), subset(labels, &idx));
        let r = match boot {
            Some(b) => metric_report(&s, &l, threshold, b)?,
            None => point_metrics(&s, &l, threshold),
        };
        out.reports.insert(k.to_string(), r);
    }
    Ok(out)
}

/// Horizon edges in hours from ICU admission: (24, 48], (48, 192], beyond.
pub const HORIZON_EDGES_H: [f64; 2] = [48.0, 192.0];
pub const HORIZON_NAMES: [&str; 3] = ["day1_after_observation", "days2_to_7", "after_week1"];

pub fn horizon_of(death_h: f64) -> usize {
    HORIZON_EDGES_H.iter().take_while(|e| death_h > **e).count()
}

/// For each horizon: deaths inside it are positives, all survivors negatives,
/// other deaths excluded.
pub fn evaluate_by_horizon(
    scores: &[f64],
    death_h: &[Option<f64>],
    threshold: f64,
    boot: Option<&BootstrapConfig>,
) -> Result<Vec<MetricReport>> {
    if scores.len() != death_h.len() {
        return Err(Error::Data("scores and death times differ in length".into()));
    }
    (0..HORIZON_NAMES.len())
        .map(|k| {
            let idx: Vec<usize> = (0..scores.len())
                .filter(|&i| death_h[i].is_none_or(|t| horizon_of(t) == k))
                .collect();
            let s = subset(scores, &idx);
            let l: Vec<bool> = idx.iter().map(|&i| death_h[i].is_some()).collect();
            match boot {
                Some(b) => metric_report(&s, &l, threshold, b),
                None => Ok(point_metrics(&s, &l, threshold)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerPair {
    pub n: usize,
    pub model: MetricReport,
    pub reference: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    /// Stays whose binary predictions differ; `None` when there are none.
    pub disagree: Option<ScorerPair>,
    /// The stays with the largest absolute probability difference.
    pub top_delta: Option<ScorerPair>,
}

/// Compare two scorers where they disagree. The reference score is min-max
/// rescaled to [0, 1] before taking probability differences.
pub fn disagreement_analysis(
    model: &[f64],
    reference: &[f64],
    labels: &[bool],
    thresholds: (f64, f64),
    top_fraction: f64,
) -> Result<DisagreementReport> {
    if model.len() != labels.len() || reference.len() != labels.len() {
        return Err(Error::Data("score and label vectors differ in length".into()));
    }
    let pair = |idx: &[usize]| ScorerPair {
        n: idx.len(),
        model: point_metrics(&subset(model, idx), &subset(labels, idx), thresholds.0),
        reference: point_metrics(&subset(reference, idx), &subset(labels, idx), thresholds.1),
    };
    let idx: Vec<usize> = (0..labels.len())
        .filter(|&i| (model[i] >= thresholds.0) != (reference[i] >= thresholds.1))
        .collect();
    let disagree = (!idx.is_empty()).then(|| pair(&idx));

    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = hi - lo;
    let scaled: Vec<f64> = reference.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect();
    let k = (top_fraction * labels.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| (model[b] - scaled[b]).abs().total_cmp(&(model[a] - scaled[a]).abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    let top_delta = (!order.is_empty()).then(|| pair(&order));
    Ok(DisagreementReport { disagree, top_delta })
}
