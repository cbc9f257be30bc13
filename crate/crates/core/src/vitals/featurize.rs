use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use super::entropy::{complexity, DEFAULT_M};
use super::{
    abnormal_patterns, aggregate_windows, general_statistics, periodicity, spectral_features, stress_burden,
    wavelet_features, Direction, EpisodeSpec, Feature, NamedFeatures, Signal, AGGREGATION_WINDOW_S, DEFAULT_LAGS,
};
use crate::harmonize::{self, vars};

/// Which signals to featurize and the thresholds defining their episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitalsConfig {
    pub window_s: f64,
    pub entropy_m: usize,
    pub lags: Vec<usize>,
    pub episodes: BTreeMap<String, Vec<EpisodeSpec>>,
}

impl Default for VitalsConfig {
    fn default() -> Self {
        let episodes = [
            (vars::HEART_RATE, vec![EpisodeSpec::below(60.0), EpisodeSpec::above(100.0)]),
            (vars::RESP_RATE, vec![EpisodeSpec::below(12.0), EpisodeSpec::above(20.0)]),
            (vars::SPO2, vec![EpisodeSpec::below(92.0)]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        VitalsConfig {
            window_s: AGGREGATION_WINDOW_S,
            entropy_m: DEFAULT_M,
            lags: DEFAULT_LAGS.to_vec(),
            episodes,
        }
    }
}

fn tag(spec: &EpisodeSpec) -> String {
    let dir = match spec.direction {
        Direction::Below => "below",
        Direction::Above => "above",
    };
    format!("{dir}{}", spec.threshold)
}

/// All features of one signal, named and in manifest order.
fn signal_features(s: &Signal, cfg: &VitalsConfig) -> Vec<(String, Feature)> {
    let mut out: Vec<(String, Feature)> = Vec::new();
    let mut extend = |prefix: &str, items: Vec<(&'static str, Feature)>| {
        out.extend(items.into_iter().map(|(n, v)| (format!("{prefix}{n}"), v)));
    };
    extend("", general_statistics(s).named());
    extend("", complexity(s, cfg.entropy_m, None).named());
    let acf = periodicity(s, &cfg.lags);
    for spec in cfg.episodes.get(&s.name).into_iter().flatten() {
        let t = tag(spec);
        extend(&format!("{t}_"), abnormal_patterns(s, spec).named());
        extend(&format!("{t}_"), stress_burden(s, spec.threshold, spec.direction).named());
    }
    let spectral = match spectral_features(s) {
        Ok(f) => f,
        Err(e) => {
            debug!("{}: spectral features absent: {e}", s.name);
            Default::default()
        }
    };
    extend("", spectral.named());
    extend("", wavelet_features(s).named());
    let mut named: Vec<(String, Feature)> = acf;
    named.append(&mut out);
    named
}

/// Ordered feature names; each contributes a value and an absent indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsManifest {
    pub features: Vec<String>,
}

impl VitalsManifest {
    pub fn for_config(cfg: &VitalsConfig) -> Self {
        let mut features = Vec::new();
        for name in cfg.episodes.keys() {
            let empty = Signal::uniform(name, vec![], cfg.window_s);
            for (f, _) in signal_features(&empty, cfg) {
                features.push(format!("{name}.{f}"));
            }
        }
        VitalsManifest { features }
    }

    /// Column names of the flattened vector: value then absent flag per feature.
    pub fn columns(&self) -> Vec<String> {
        self.features
            .iter()
            .flat_map(|f| [f.clone(), format!("{f}__absent")])
            .collect()
    }

    pub fn width(&self) -> usize {
        2 * self.features.len()
    }
}

/// Flattened (value, absent) pairs; absent features carry value 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalsVector {
    pub values: Vec<f64>,
}

/// Featurize a stay's native-resolution vital signs after 5-minute averaging.
pub fn featurize_vitals(signals: &BTreeMap<String, harmonize::Signal>, cfg: &VitalsConfig) -> VitalsVector {
    let mut values = Vec::new();
    for name in cfg.episodes.keys() {
        let s = match signals.get(name) {
            Some(raw) => aggregate_windows(name, &raw.times_s, &raw.values, cfg.window_s),
            None => Signal::uniform(name, vec![], cfg.window_s),
        };
        for (_, f) in signal_features(&s, cfg) {
            match f {
                Some(v) if v.is_finite() => values.extend([v, 0.0]),
                _ => values.extend([0.0, 1.0]),
            }
        }
    }
    VitalsVector { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn raw(values: Vec<f64>, step_s: f64) -> harmonize::Signal {
        harmonize::Signal {
            times_s: (0..values.len()).map(|i| i as f64 * step_s).collect(),
            values,
        }
    }

    #[test]
    fn manifest_width_is_twice_feature_count() {
        let cfg = VitalsConfig::default();
        let m = VitalsManifest::for_config(&cfg);
        assert_eq!(m.width(), m.columns().len());
        let v = featurize_vitals(&BTreeMap::new(), &cfg);
        assert_eq!(v.values.len(), m.width());
        // No signals at all: every pair is (0, absent).
        assert!(v.values.chunks(2).all(|p| p == [0.0, 1.0]));
    }

    #[test]
    fn two_signal_manifest_arithmetic() {
        let mut cfg = VitalsConfig::default();
        cfg.episodes.remove(vars::SPO2);
        let m = VitalsManifest::for_config(&cfg);
        let per_signal = m.features.len() / 2;
        assert_eq!(m.width(), 2 * 2 * per_signal);
    }

    #[test]
    fn deterministic_and_finite() {
        let mut rng = rng_for(1, "vitals-test");
        let mut signals = BTreeMap::new();
        for name in [vars::HEART_RATE, vars::SPO2, vars::RESP_RATE] {
            let v: Vec<f64> = (0..96).map(|_| 80.0 + 15.0 * rng.random::<f64>()).collect();
            signals.insert(name.to_string(), raw(v, 900.0));
        }
        let cfg = VitalsConfig::default();
        let a = featurize_vitals(&signals, &cfg);
        let b = featurize_vitals(&signals, &cfg);
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| v.is_finite()));
        let absent: f64 = a.values.chunks(2).map(|p| p[1]).sum();
        assert_eq!(absent, 0.0);
    }
}
