//! Vital-sign feature engineering over the first 24 hours.

mod entropy;
mod episodes;
mod featurize;
mod periodicity;
mod spectral;
mod stats;
mod wavelet;

use serde::{Deserialize, Serialize};

pub use entropy::{approximate_entropy, complexity, sample_entropy, Complexity};
pub use episodes::{abnormal_patterns, stress_burden, Baseline, Burden, Direction, EpisodeFeatures, EpisodeSpec};
pub use featurize::{featurize_vitals, VitalsConfig, VitalsManifest, VitalsVector};
pub use periodicity::{autocorrelation, periodicity, DEFAULT_LAGS};
pub use spectral::{spectral_features, SpectralFeatures};
pub use stats::{general_statistics, percentile, GeneralStats};
pub use wavelet::{dwt_db4, idwt_db4, wavelet_features, WaveletFeatures, DB4_DEC_HI, DB4_DEC_LO};

use crate::error::{Error, Result};

/// Width of the aggregation windows applied to high-frequency sources.
pub const AGGREGATION_WINDOW_S: f64 = 300.0;

/// A feature value, `None` when it cannot be computed for the input.
pub type Feature = Option<f64>;

pub(crate) fn finite(v: f64) -> Feature {
    v.is_finite().then_some(v)
}

/// Named features in a fixed order.
pub trait NamedFeatures {
    fn named(&self) -> Vec<(&'static str, Feature)>;
}

/// A sampled vital sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Nominal spacing between samples, seconds.
    pub interval: f64,
}

impl Signal {
    pub fn new(name: &str, times: Vec<f64>, values: Vec<f64>, interval: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Data(format!("signal `{name}`: {} times for {} values", times.len(), values.len())));
        }
        if interval.is_nan() || interval <= 0.0 {
            return Err(Error::Data(format!("signal `{name}`: sample interval must be positive")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("signal `{name}`: times must be strictly increasing")));
        }
        Ok(Signal {
            name: name.to_string(),
            times,
            values,
            interval,
        })
    }

    /// Evenly spaced samples starting at t = 0.
    pub fn uniform(name: &str, values: Vec<f64>, interval: f64) -> Self {
        let times = (0..values.len()).map(|i| i as f64 * interval).collect();
        Signal {
            name: name.to_string(),
            times,
            values,
            interval,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.interval).abs() <= 1e-6 * self.interval)
    }

    /// Indices where consecutive samples are more than one interval apart.
    pub(crate) fn is_gap(&self, i: usize) -> bool {
        i > 0 && self.times[i] - self.times[i - 1] > 1.5 * self.interval
    }
}

/// Mean of samples in non-overlapping windows of `window_s` seconds. Empty
/// windows are skipped. The interval is the smallest spacing between
/// occupied windows, so regularly charted sources stay uniform.
pub fn aggregate_windows(name: &str, times_s: &[f64], values: &[f64], window_s: f64) -> Signal {
    let mut bins: Vec<(i64, f64, usize)> = Vec::new();
    for (&t, &v) in times_s.iter().zip(values) {
        if !v.is_finite() {
            continue;
        }
        let w = ((t + 1e-6) / window_s).floor() as i64;
        match bins.last_mut() {
            Some(last) if last.0 == w => {
                last.1 += v;
                last.2 += 1;
            }
            _ => bins.push((w, v, 1)),
        }
    }
    let times: Vec<f64> = bins.iter().map(|b| b.0 as f64 * window_s).collect();
    let vals = bins.iter().map(|b| b.1 / b.2 as f64).collect();
    let interval = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Signal {
        name: name.to_string(),
        times,
        values: vals,
        interval: if interval.is_finite() { interval } else { window_s },
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population (1/N) variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_minute_means() {
        let t = [0.0, 60.0, 299.0, 300.0, 900.0];
        let v = [1.0, 2.0, 3.0, 10.0, 20.0];
        let s = aggregate_windows("x", &t, &v, 300.0);
        assert_eq!(s.values, vec![2.0, 10.0, 20.0]);
        assert_eq!(s.times, vec![0.0, 300.0, 900.0]);
        assert_eq!(s.interval, 300.0);
        assert!(!s.is_uniform());
    }

    #[test]
    fn quarter_hourly_source_stays_uniform() {
        let t: Vec<f64> = (0..96).map(|k| 3600.0 * (0.137 + 0.25 * k as f64)).collect();
        let v = vec![1.0; 96];
        let s = aggregate_windows("x", &t, &v, 300.0);
        assert_eq!(s.len(), 96);
        assert_eq!(s.interval, 900.0);
        assert!(s.is_uniform());
    }

    #[test]
    fn rejects_unordered_times() {
        assert!(Signal::new("x", vec![0.0, 0.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(Signal::new("x", vec![0.0, 1.0], vec![1.0, 2.0], 0.0).is_err());
    }
}
