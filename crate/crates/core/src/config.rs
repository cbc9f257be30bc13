//! Run configuration: one TOML file, one master seed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_FRACTIONS;
use crate::features::{FeatureConfig, Toggles};
use crate::ingest::GenConfig;
use crate::model::TrainConfig;
use crate::pipeline::{EvalConfig, Fusion};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    /// Raw tables; default to `<work_dir>/raw/*.csv`.
    pub events: Option<PathBuf>,
    pub statics: Option<PathBuf>,
    pub notes: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: PathBuf::from("work"),
            events: None,
            statics: None,
            notes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: GenConfig,
    #[serde(default)]
    pub pipeline: Toggles,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fusion: Fusion,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            paths: Paths::default(),
            synth: GenConfig::default(),
            pipeline: Toggles::default(),
            train: TrainConfig::default(),
            fusion: Fusion::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
        }
        .resolved()
    }

    pub fn parse(doc: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(doc)?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Derive every component seed from the master seed.
    pub fn resolved(mut self) -> Self {
        self.synth.seed = derive_seed(self.seed, "synth");
        self.train.seed = derive_seed(self.seed, "train");
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        let f = self.split.fractions;
        if f.iter().any(|x| *x < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, "eval")
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            toggles: self.pipeline,
            ..FeatureConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::parse("[train]\nbatch_size = 16\n").is_err());
        let cfg = RunConfig::parse("seed = 7\n").unwrap();
        assert_eq!(cfg, RunConfig::with_seed(7));
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::parse(
            "seed = 3\n[pipeline]\nuse_notes = false\n[train]\nbatch_size = 32\n[split]\nfractions = [0.6, 0.2, 0.2]\n",
        )
        .unwrap();
        assert!(!cfg.pipeline.use_notes && cfg.pipeline.use_vitals_features);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.split.fractions, [0.6, 0.2, 0.2]);
    }

    #[test]
    fn invalid_sections_are_config_errors() {
        assert!(RunConfig::parse("seed = 1\n[split]\nfractions = [0.5, 0.1, 0.1]\n").is_err());
        assert!(RunConfig::parse("seed = 1\nunknown = 2\n").is_err());
        assert!(RunConfig::parse("seed = 1\n[eval]\ngroup_keys = [\"zip\"]\n").is_err());
    }
}
