use super::{finite, mean, variance, Feature, NamedFeatures, Signal};

/// Daubechies-4 decomposition low-pass filter.
pub const DB4_DEC_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

/// Quadrature mirror of [`DB4_DEC_LO`].
pub const DB4_DEC_HI: [f64; 8] = {
    let mut g = [0.0; 8];
    let mut j = 0;
    while j < 8 {
        let s = if j % 2 == 0 { -1.0 } else { 1.0 };
        g[j] = s * DB4_DEC_LO[7 - j];
        j += 1;
    }
    g
};

const L: usize = 8;

/// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1].
fn ext(x: &[f64], i: isize) -> f64 {
    let n = x.len() as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    x[i as usize]
}

/// One level of the db4 transform with symmetric extension.
/// Returns (approximation, detail), each of length floor((N + 7) / 2).
pub fn dwt_db4(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let out_len = (x.len() + L - 1) / 2;
    let mut ca = Vec::with_capacity(out_len);
    let mut cd = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..L {
            let v = ext(x, (2 * k + 1) as isize - j as isize);
            a += DB4_DEC_LO[j] * v;
            d += DB4_DEC_HI[j] * v;
        }
        ca.push(a);
        cd.push(d);
    }
    (ca, cd)
}

/// Inverse of [`dwt_db4`] for a signal of length `n`.
pub fn idwt_db4(ca: &[f64], cd: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let mut v = 0.0;
            for k in 0..ca.len() {
                let idx = 2 * k as isize + 1 - m as isize;
                if (0..L as isize).contains(&idx) {
                    v += DB4_DEC_LO[idx as usize] * ca[k] + DB4_DEC_HI[idx as usize] * cd[k];
                }
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveletFeatures {
    /// (mean, variance, std) for cA1, cD1, cA2, cD2.
    pub bands: [[Feature; 3]; 4],
}

const BAND_NAMES: [&str; 4] = ["cA1", "cD1", "cA2", "cD2"];
const NAMES: [&str; 12] = [
    "wavelet_cA1_mean",
    "wavelet_cA1_var",
    "wavelet_cA1_std",
    "wavelet_cD1_mean",
    "wavelet_cD1_var",
    "wavelet_cD1_std",
    "wavelet_cA2_mean",
    "wavelet_cA2_var",
    "wavelet_cA2_std",
    "wavelet_cD2_mean",
    "wavelet_cD2_var",
    "wavelet_cD2_std",
];

impl NamedFeatures for WaveletFeatures {
    fn named(&self) -> Vec<(&'static str, Feature)> {
        debug_assert_eq!(BAND_NAMES.len() * 3, NAMES.len());
        self.bands
            .iter()
            .flatten()
            .zip(NAMES)
            .map(|(v, n)| (n, *v))
            .collect()
    }
}

/// Two-level db4 coefficient statistics. Signals shorter than the filter are absent.
pub fn wavelet_features(s: &Signal) -> WaveletFeatures {
    if s.len() < L {
        return WaveletFeatures::default();
    }
    let (ca1, cd1) = dwt_db4(&s.values);
    let (ca2, cd2) = dwt_db4(&ca1);
    let stats = |c: &[f64]| {
        let var = variance(c);
        [finite(mean(c)), finite(var), finite(var.sqrt())]
    };
    WaveletFeatures {
        bands: [stats(&ca1), stats(&cd1), stats(&ca2), stats(&cd2)],
    }
}
