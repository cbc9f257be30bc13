use super::{finite, variance, Feature, NamedFeatures, Signal};

pub const DEFAULT_M: usize = 2;
pub const DEFAULT_R_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Complexity {
    pub apen: Feature,
    pub sampen: Feature,
}

impl NamedFeatures for Complexity {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        vec![("apen", self.apen), ("sampen", self.sampen)]
    }
}

fn within(x: &[f64], i: usize, j: usize, len: usize, r: f64) -> bool {
    (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r)
}

/// Approximate entropy (Pincus), self-matches included.
pub fn approximate_entropy(x: &[f64], m: usize, r: f64) -> Feature {
    if x.len() < m + 2 || r.is_nan() || r < 0.0 {
        return None;
    }
    let phi = |len: usize| {
        let count = x.len() - len + 1;
        let total: f64 = (0..count)
            .map(|i| {
                let c = (0..count).filter(|&j| within(x, i, j, len, r)).count();
                (c as f64 / count as f64).ln()
            })
            .sum();
        total / count as f64
    };
    finite(phi(m) - phi(m + 1))
}

/// Sample entropy (Richman and Moorman): the first N - m templates are
/// compared at lengths m and m + 1, self-matches excluded.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Feature {
    if x.len() < m + 2 || r.is_nan() || r < 0.0 {
        return None;
    }
    let count = x.len() - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..count {
        for j in i + 1..count {
            if within(x, i, j, m, r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        return None;
    }
    finite(-(a as f64 / b as f64).ln())
}

/// Both entropies with tolerance `r`; `None` uses 0.2 times the population SD.
pub fn complexity(s: &Signal, m: usize, r: Option<f64>) -> Complexity {
    if s.is_empty() {
        return Complexity::default();
    }
    let r = r.unwrap_or_else(|| DEFAULT_R_FACTOR * variance(&s.values).sqrt());
    Complexity {
        apen: approximate_entropy(&s.values, m, r),
        sampen: sample_entropy(&s.values, m, r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    // Oracle: materialize every template and compare all ordered pairs.
    fn templates(x: &[f64], len: usize, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|i| x[i..i + len].to_vec()).collect()
    }

    fn cheb(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    fn apen_oracle(x: &[f64], m: usize, r: f64) -> f64 {
        let n = x.len();
        let phi = |len: usize| {
            let t = templates(x, len, n - len + 1);
            let mut acc = 0.0;
            for a in &t {
                let matches = t.iter().filter(|b| cheb(a, b) <= r).count();
                acc += (matches as f64 / t.len() as f64).ln();
            }
            acc / t.len() as f64
        };
        phi(m) - phi(m + 1)
    }

    fn sampen_oracle(x: &[f64], m: usize, r: f64) -> f64 {
        let n = x.len();
        let tm = templates(x, m, n - m);
        let tm1 = templates(x, m + 1, n - m);
        let mut b = 0.0;
        let mut a = 0.0;
        for i in 0..n - m {
            for j in 0..n - m {
                if i != j {
                    b += (cheb(&tm[i], &tm[j]) <= r) as u8 as f64;
                    a += (cheb(&tm1[i], &tm1[j]) <= r) as u8 as f64;
                }
            }
        }
        -(a / b).ln()
    }

    fn sd(x: &[f64]) -> f64 {
        variance(x).sqrt()
    }

    #[test]
    fn constant_series_is_zero() {
        let c = complexity(&Signal::uniform("x", vec![3.0; 30], 1.0), 2, None);
        assert_eq!(c.apen, Some(0.0));
        assert_eq!(c.sampen, Some(0.0));
    }

    #[test]
    fn alternating_matches_oracle() {
        let x: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let r = 0.2 * sd(&x);
        assert!((approximate_entropy(&x, 2, r).unwrap() - apen_oracle(&x, 2, r)).abs() < 1e-12);
        assert!((sample_entropy(&x, 2, r).unwrap() - sampen_oracle(&x, 2, r)).abs() < 1e-12);
    }

    #[test]
    fn noise_more_complex_than_sine() {
        let mut rng = rng_for(11, "entropy-test");
        let noise: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let sine: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin() * 2f64.sqrt()).collect();
        let sn = sample_entropy(&noise, 2, 0.2 * sd(&noise)).unwrap();
        let ss = sample_entropy(&sine, 2, 0.2 * sd(&sine)).unwrap();
        assert!(sn > ss, "noise {sn} sine {ss}");
    }

    #[test]
    fn too_short_is_absent() {
        let c = complexity(&Signal::uniform("x", vec![1.0, 2.0, 3.0], 1.0), 2, None);
        assert_eq!(c, Complexity::default());
    }

    proptest! {
        #[test]
        fn random_series_match_oracle(x in proptest::collection::vec(-10.0f64..10.0, 10..60)) {
            let r = 0.2 * sd(&x);
            let ap = approximate_entropy(&x, 2, r).unwrap();
            prop_assert!((ap - apen_oracle(&x, 2, r)).abs() < 1e-12);
            if let Some(se) = sample_entropy(&x, 2, r) {
                prop_assert!((se - sampen_oracle(&x, 2, r)).abs() < 1e-12);
            }
        }

        #[test]
        fn affine_invariance(x in proptest::collection::vec(-10.0f64..10.0, 10..60), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let cx = complexity(&Signal::uniform("x", x.clone(), 1.0), 2, None);
            let cy = complexity(&Signal::uniform("y", y, 1.0), 2, None);
            prop_assert!((cx.apen.unwrap() - cy.apen.unwrap()).abs() < 1e-9);
            prop_assert_eq!(cx.sampen.is_some(), cy.sampen.is_some());
            if let (Some(p), Some(q)) = (cx.sampen, cy.sampen) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
