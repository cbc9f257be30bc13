//! Stay-level bootstrap confidence intervals.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_indexed;

pub const DEFAULT_RESAMPLES: usize = 1000;
/// Give up after this many undefined resamples per requested resample.
const MAX_REDRAW_FACTOR: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Basic bootstrap: `[2θ - q(0.975), 2θ - q(0.025)]`.
    #[default]
    Pivot,
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Resamples on which the statistic was undefined and had to be redrawn.
    pub redrawn: usize,
}

/// Linear-interpolation quantile of sorted data (numpy's default method).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap interval for `stat` over `n` units. `stat` receives the resampled
/// unit indices and returns `None` when undefined on them. Resample `k` draws
/// from its own derived stream, so results do not depend on evaluation order.
pub fn bootstrap_ci<F>(stat: F, n: usize, resamples: usize, seed: u64, method: CiMethod) -> Result<Option<Interval>>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n == 0 {
        return Err(Error::Data("bootstrap needs at least one unit".into()));
    }
    if resamples < 2 {
        return Err(Error::Config("bootstrap needs at least two resamples".into()));
    }
    let identity: Vec<usize> = (0..n).collect();
    let Some(point) = stat(&identity) else {
        return Ok(None);
    };
    let mut thetas = Vec::with_capacity(resamples);
    let mut redrawn = 0;
    let mut idx = vec![0usize; n];
    for k in 0..resamples {
        let mut rng = rng_indexed(seed, "bootstrap", k as u64);
        loop {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            if let Some(v) = stat(&idx) {
                thetas.push(v);
                break;
            }
            redrawn += 1;
            if redrawn > MAX_REDRAW_FACTOR * resamples {
                return Err(Error::Data(format!("statistic undefined on {redrawn} bootstrap resamples")));
            }
        }
    }
    thetas.sort_by(f64::total_cmp);
    let q_lo = quantile_sorted(&thetas, 0.025);
    let q_hi = quantile_sorted(&thetas, 0.975);
    let (lo, hi) = match method {
        CiMethod::Pivot => (2.0 * point - q_hi, 2.0 * point - q_lo),
        CiMethod::Percentile => (q_lo, q_hi),
    };
    Ok(Some(Interval { point, lo, hi, redrawn }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::auroc;

    #[test]
    fn quantiles_match_numpy() {
        let d = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(quantile_sorted(&d, 0.5), 3.0);
        assert_eq!(quantile_sorted(&d, 0.025), 1.1);
        assert!((quantile_sorted(&d, 0.975) - 9.4).abs() < 1e-12);
    }

    #[test]
    fn constant_statistic_gives_zero_width() {
        let iv = bootstrap_ci(|_| Some(0.7), 30, 200, 1, CiMethod::Pivot).unwrap().unwrap();
        assert_eq!((iv.lo, iv.point, iv.hi), (0.7, 0.7, 0.7));
    }

    #[test]
    fn redraws_single_class_resamples_and_is_reproducible() {
        let labels = [true, false, false, false, false, false];
        let scores = [0.9, 0.1, 0.2, 0.3, 0.4, 0.5];
        let stat = |idx: &[usize]| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            auroc(&s, &l)
        };
        let a = bootstrap_ci(stat, 6, 300, 9, CiMethod::Pivot).unwrap().unwrap();
        let b = bootstrap_ci(stat, 6, 300, 9, CiMethod::Pivot).unwrap().unwrap();
        assert_eq!(a, b);
        assert!(a.redrawn > 0);
        assert!(a.lo <= a.hi);
    }

    #[test]
    fn undefined_point_gives_none() {
        assert!(bootstrap_ci(|_| None, 5, 10, 0, CiMethod::Pivot).unwrap().is_none());
        assert!(bootstrap_ci(|_| Some(1.0), 0, 10, 0, CiMethod::Pivot).is_err());
    }
}
