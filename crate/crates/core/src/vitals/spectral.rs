use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{finite, mean, Feature, NamedFeatures, Signal};
use crate::error::{Error, Result};

pub const MIN_SPECTRAL_LEN: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpectralFeatures {
    pub peak_frequency: Feature,
    pub centroid: Feature,
    pub bandwidth: Feature,
    pub flatness: Feature,
    pub energy: Feature,
    pub entropy: Feature,
}

impl NamedFeatures for SpectralFeatures {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        vec![
            ("peak_frequency", self.peak_frequency),
            ("spectral_centroid", self.centroid),
            ("spectral_bandwidth", self.bandwidth),
            ("spectral_flatness", self.flatness),
            ("spectral_energy", self.energy),
            ("spectral_entropy", self.entropy),
        ]
    }
}

/// One-sided power spectrum of the mean-removed signal, DC excluded.
/// Returns (frequency Hz, power) where power is weighted so that it sums to
/// the time-domain energy (Parseval).
fn one_sided_power(x: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let n = x.len();
    let m = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (1..=n / 2)
        .map(|k| {
            let w = if 2 * k == n { 1.0 } else { 2.0 };
            (k as f64 / (n as f64 * dt), w * buf[k].norm_sqr() / n as f64)
        })
        .collect()
}

/// Frequency-domain summary of a uniformly sampled signal.
///
/// Signals with fewer than 8 samples give absent features; non-uniform
/// sampling is an error (resample to a fixed interval first).
pub fn spectral_features(s: &Signal) -> Result<SpectralFeatures> {
    if s.len() < MIN_SPECTRAL_LEN {
        return Ok(SpectralFeatures::default());
    }
    if !s.is_uniform() {
        return Err(Error::NonUniformSampling);
    }
    let spec = one_sided_power(&s.values, s.interval);
    let total: f64 = spec.iter().map(|p| p.1).sum();
    // Mean removal leaves rounding residue on constant input.
    let raw_energy: f64 = s.values.iter().map(|v| v * v).sum();
    if total <= 1e-24 * raw_energy.max(1.0) {
        return Ok(SpectralFeatures {
            energy: Some(0.0),
            ..Default::default()
        });
    }
    let (peak_f, _) = spec
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |best, &(f, p)| if p > best.1 { (f, p) } else { best });
    let centroid = spec.iter().map(|(f, p)| f * p).sum::<f64>() / total;
    let bandwidth = (spec.iter().map(|(f, p)| (f - centroid).powi(2) * p).sum::<f64>() / total).sqrt();
    let nb = spec.len() as f64;
    let flatness = if spec.iter().any(|p| p.1 <= 0.0) {
        0.0
    } else {
        let log_mean = spec.iter().map(|p| p.1.ln()).sum::<f64>() / nb;
        log_mean.exp() / (total / nb)
    };
    let entropy = if spec.len() < 2 {
        0.0
    } else {
        let h: f64 = spec
            .iter()
            .map(|p| p.1 / total)
            .filter(|q| *q > 0.0)
            .map(|q| -q * q.ln())
            .sum();
        (h / nb.ln()).max(0.0)
    };
    Ok(SpectralFeatures {
        peak_frequency: finite(peak_f),
        centroid: finite(centroid),
        bandwidth: finite(bandwidth),
        flatness: finite(flatness),
        energy: finite(total),
        entropy: finite(entropy),
    })
}
