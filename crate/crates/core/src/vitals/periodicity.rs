use super::{finite, mean, Feature, Signal};

pub const DEFAULT_LAGS: [usize; 5] = [1, 2, 3, 6, 12];

/// Normalized autocorrelation at `lag`. `None` for a constant series or a
/// lag at or beyond the series length.
pub fn autocorrelation(x: &[f64], lag: usize) -> Feature {
    if x.is_empty() || lag >= x.len() {
        return None;
    }
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if denom <= f64::EPSILON * x.len() as f64 * m.abs().max(1.0) {
        return None;
    }
    let num: f64 = (0..x.len() - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
    finite(num / denom)
}

/// Autocorrelation at each configured lag, named `acf_<lag>`.
pub fn periodicity(s: &Signal, lags: &[usize]) -> Vec<(String, Feature)> {
    lags.iter()
        .map(|&k| (format!("acf_{k}"), autocorrelation(&s.values, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn lag_zero_is_one() {
        let x = [1.0, 3.0, 2.0, 5.0];
        assert!((autocorrelation(&x, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_is_absent() {
        assert_eq!(autocorrelation(&[2.0; 10], 1), None);
        assert_eq!(periodicity(&Signal::uniform("x", vec![2.0; 10], 1.0), &DEFAULT_LAGS)[0].1, None);
    }

    #[test]
    fn sine_peaks_at_its_period() {
        let x: Vec<f64> = (0..200).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 10.0).sin()).collect();
        let best = (1..=15)
            .max_by(|&a, &b| autocorrelation(&x, a).unwrap().total_cmp(&autocorrelation(&x, b).unwrap()))
            .unwrap();
        assert_eq!(best, 10);
    }

    #[test]
    fn shuffled_noise_is_uncorrelated() {
        let mut rng = rng_for(5, "acf-test");
        let n = 400;
        let mut total = 0.0;
        let trials = 50;
        for _ in 0..trials {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            x.shuffle(&mut rng);
            for k in 1..=5 {
                total += autocorrelation(&x, k).unwrap().abs();
            }
        }
        let avg = total / (trials * 5) as f64;
        assert!(avg < 3.0 / (n as f64).sqrt(), "{avg}");
    }

    #[test]
    fn lag_beyond_length_absent() {
        assert_eq!(autocorrelation(&[1.0, 2.0, 3.0], 3), None);
    }
}
