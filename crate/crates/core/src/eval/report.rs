//! Metric reports with bootstrap intervals and their table rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, CiMethod, Interval};
use super::metrics::Metric;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Estimate {
    pub fn point_only(point: Option<f64>) -> Self {
        Estimate { point, lo: None, hi: None }
    }

    /// Three-decimal cell such as `0.916 (0.904-0.925)`.
    pub fn cell(&self) -> String {
        match (self.point, self.lo, self.hi) {
            (Some(p), Some(lo), Some(hi)) => format!("{p:.3} ({lo:.3}-{hi:.3})"),
            (Some(p), _, _) => format!("{p:.3}"),
            _ => "NA".to_string(),
        }
    }
}

impl From<Interval> for Estimate {
    fn from(iv: Interval) -> Self {
        Estimate {
            point: Some(iv.point),
            lo: Some(iv.lo),
            hi: Some(iv.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub n_pos: usize,
    pub threshold: f64,
    pub metrics: BTreeMap<Metric, Estimate>,
    /// Undefined bootstrap resamples redrawn, summed over metrics.
    pub redrawn: usize,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).and_then(|e| e.point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub method: CiMethod,
}

/// Point estimates of every metric.
pub fn point_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> MetricReport {
    let metrics = Metric::ALL
        .iter()
        .map(|m| (*m, Estimate::point_only(m.compute(scores, labels, threshold))))
        .collect();
    MetricReport {
        n: scores.len(),
        n_pos: labels.iter().filter(|l| **l).count(),
        threshold,
        metrics,
        redrawn: 0,
    }
}

/// Every metric with a bootstrap interval. All metrics share the resample
/// streams, so their intervals come from the same resampled cohorts.
pub fn metric_report(scores: &[f64], labels: &[bool], threshold: f64, boot: &BootstrapConfig) -> Result<MetricReport> {
    let mut report = point_metrics(scores, labels, threshold);
    if scores.is_empty() {
        return Ok(report);
    }
    for m in Metric::ALL {
        let stat = |idx: &[usize]| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            m.compute(&s, &l, threshold)
        };
        if let Some(iv) = bootstrap_ci(stat, scores.len(), boot.resamples, boot.seed, boot.method)? {
            report.redrawn += iv.redrawn;
            let (lo, hi) = m.range();
            let mut e = Estimate::from(iv);
            e.lo = e.lo.map(|x| x.clamp(lo, hi));
            e.hi = e.hi.map(|x| x.clamp(lo, hi));
            report.metrics.insert(m, e);
        }
    }
    Ok(report)
}
