use serde::{Deserialize, Serialize};

use super::stats::percentile;
use super::{Feature, NamedFeatures, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Median of the samples that are not beyond the threshold.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub threshold: f64,
    pub direction: Direction,
    pub min_duration_s: f64,
    pub baseline: Baseline,
}

impl EpisodeSpec {
    pub fn below(threshold: f64) -> Self {
        EpisodeSpec {
            threshold,
            direction: Direction::Below,
            min_duration_s: 0.0,
            baseline: Baseline::Median,
        }
    }

    pub fn above(threshold: f64) -> Self {
        EpisodeSpec {
            direction: Direction::Above,
            ..Self::below(threshold)
        }
    }

    fn beyond(&self, v: f64) -> bool {
        match self.direction {
            Direction::Below => v < self.threshold,
            Direction::Above => v > self.threshold,
        }
    }

    /// Signed excursion of `v` relative to `reference`, positive when abnormal.
    fn excursion(&self, reference: f64, v: f64) -> f64 {
        match self.direction {
            Direction::Below => reference - v,
            Direction::Above => v - reference,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeFeatures {
    pub count: Feature,
    pub total_length_s: Feature,
    pub mean_depth: Feature,
    pub mean_area: Feature,
    pub mean_onset_slope: Feature,
}

impl NamedFeatures for EpisodeFeatures {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        vec![
            ("episode_count", self.count),
            ("episode_length_s", self.total_length_s),
            ("episode_depth", self.mean_depth),
            ("episode_area", self.mean_area),
            ("episode_onset_slope", self.mean_onset_slope),
        ]
    }
}

/// Maximal runs of consecutive samples beyond the threshold.
fn runs(s: &Signal, spec: &EpisodeSpec) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..s.len() {
        let beyond = spec.beyond(s.values[i]);
        if let Some(st) = start {
            if !beyond || s.is_gap(i) {
                out.push((st, i));
                start = None;
            }
        }
        if beyond && start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st, s.len()));
    }
    out
}

/// Episodes beyond a threshold: count, total length, and mean depth, area
/// and onset slope relative to the baseline.
pub fn abnormal_patterns(s: &Signal, spec: &EpisodeSpec) -> EpisodeFeatures {
    if s.is_empty() {
        return EpisodeFeatures::default();
    }
    let baseline = match spec.baseline {
        Baseline::Fixed(b) => b,
        Baseline::Median => {
            let mut normal: Vec<f64> = s.values.iter().copied().filter(|v| !spec.beyond(*v)).collect();
            if normal.is_empty() {
                normal = s.values.clone();
            }
            normal.sort_by(f64::total_cmp);
            percentile(&normal, 50.0)
        }
    };
    let dt = s.interval;
    let episodes: Vec<(usize, usize)> = runs(s, spec)
        .into_iter()
        .filter(|(a, b)| (b - a) as f64 * dt >= spec.min_duration_s)
        .collect();
    let n = episodes.len();
    if n == 0 {
        return EpisodeFeatures {
            count: Some(0.0),
            total_length_s: Some(0.0),
            mean_depth: Some(0.0),
            mean_area: Some(0.0),
            mean_onset_slope: Some(0.0),
        };
    }
    let (mut length, mut depth, mut area, mut slope) = (0.0, 0.0, 0.0, 0.0);
    for &(a, b) in &episodes {
        let seg = &s.values[a..b];
        // Extreme sample: the nadir for dips, the peak for surges.
        let (k, extreme) = seg
            .iter()
            .enumerate()
            .max_by(|x, y| spec.excursion(0.0, *x.1).total_cmp(&spec.excursion(0.0, *y.1)).then(y.0.cmp(&x.0)))
            .map(|(k, v)| (k, *v))
            .expect("non-empty run");
        length += (b - a) as f64 * dt;
        depth += spec.excursion(baseline, extreme);
        area += seg.iter().map(|v| spec.excursion(baseline, *v)).sum::<f64>() * dt;
        if k > 0 {
            slope += spec.excursion(seg[0], extreme) / (k as f64 * dt);
        }
    }
    let nf = n as f64;
    EpisodeFeatures {
        count: Some(nf),
        total_length_s: Some(length),
        mean_depth: Some(depth / nf),
        mean_area: Some(area / nf),
        mean_onset_slope: Some(slope / nf),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Burden {
    pub seconds: Feature,
    pub area: Feature,
}

impl NamedFeatures for Burden {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        vec![("burden_s", self.seconds), ("burden_area", self.area)]
    }
}

/// Time beyond the threshold and the excursion area past it (rectangle rule).
pub fn stress_burden(s: &Signal, threshold: f64, direction: Direction) -> Burden {
    if s.is_empty() {
        return Burden::default();
    }
    let spec = EpisodeSpec {
        direction,
        ..EpisodeSpec::below(threshold)
    };
    let beyond: Vec<f64> = s.values.iter().copied().filter(|v| spec.beyond(*v)).collect();
    Burden {
        seconds: Some(beyond.len() as f64 * s.interval),
        area: Some(beyond.iter().map(|v| spec.excursion(threshold, *v)).sum::<f64>() * s.interval),
    }
}
