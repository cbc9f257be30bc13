use super::{finite, mean, Feature, NamedFeatures, Signal};

/// Linear-interpolated percentile (numpy's default), `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeneralStats {
    pub min: Feature,
    pub max: Feature,
    pub range: Feature,
    pub p5: Feature,
    pub p25: Feature,
    pub p50: Feature,
    pub p75: Feature,
    pub p95: Feature,
    pub below_median_fraction: Feature,
    pub zero_crossings: Feature,
}

impl NamedFeatures for GeneralStats {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        vec![
            ("min", self.min),
            ("max", self.max),
            ("range", self.range),
            ("p5", self.p5),
            ("p25", self.p25),
            ("p50", self.p50),
            ("p75", self.p75),
            ("p95", self.p95),
            ("below_median_fraction", self.below_median_fraction),
            ("zero_crossings", self.zero_crossings),
        ]
    }
}

/// Distribution summary. Zero crossings count sign changes of the
/// mean-removed series, skipping samples exactly at the mean.
pub fn general_statistics(s: &Signal) -> GeneralStats {
    let x = &s.values;
    if x.is_empty() {
        return GeneralStats::default();
    }
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let n = x.len();
    let median = percentile(&sorted, 50.0);
    let m = mean(x);
    let mut crossings = 0usize;
    let mut prev_sign = 0i8;
    for v in x {
        let d = v - m;
        let sign = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            continue;
        };
        if prev_sign != 0 && sign != prev_sign {
            crossings += 1;
        }
        prev_sign = sign;
    }
    GeneralStats {
        min: finite(sorted[0]),
        max: finite(sorted[n - 1]),
        range: finite(sorted[n - 1] - sorted[0]),
        p5: finite(percentile(&sorted, 5.0)),
        p25: finite(percentile(&sorted, 25.0)),
        p50: finite(median),
        p75: finite(percentile(&sorted, 75.0)),
        p95: finite(percentile(&sorted, 95.0)),
        below_median_fraction: finite(x.iter().filter(|v| **v < median).count() as f64 / n as f64),
        zero_crossings: Some(crossings as f64),
    }
}
