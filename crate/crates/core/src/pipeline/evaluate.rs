use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Variant;
use crate::error::{Error, Result};
use crate::eval::{
    age_bucket, auroc, bias_audit, delong_test, disagreement_analysis, evaluate_by_group, evaluate_by_horizon,
    metric_report, select_threshold, BiasAudit, BootstrapConfig, CiMethod, DeLong, DisagreementReport, GroupReports,
    MetricReport, Split, DEFAULT_RESAMPLES, DEFAULT_SENSITIVITY, HORIZON_NAMES,
};
use crate::features::{FeatureTable, FittedInputs, StayFeatures};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub target_sensitivity: f64,
    pub resamples: usize,
    pub ci_method: CiMethod,
    pub group_keys: Vec<String>,
    pub min_group_n: usize,
    pub top_fraction: f64,
    pub reference_score: String,
    pub baselines: Vec<String>,
    pub audit_attributes: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            target_sensitivity: DEFAULT_SENSITIVITY,
            resamples: DEFAULT_RESAMPLES,
            ci_method: CiMethod::Pivot,
            group_keys: vec!["hospital".into()],
            min_group_n: 30,
            top_fraction: 0.2,
            reference_score: "saps2".into(),
            baselines: ["sofa", "saps2", "oasis", "apache2"].map(String::from).to_vec(),
            audit_attributes: ["race", "ethnicity", "sex", "age"].map(String::from).to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_sensitivity > 0.0 && self.target_sensitivity <= 1.0) {
            return Err(Error::Config("target_sensitivity must lie in (0, 1]".into()));
        }
        if self.resamples == 0 {
            return Err(Error::Config("resamples must be positive".into()));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config("top_fraction must lie in (0, 1]".into()));
        }
        for k in self.group_keys.iter().chain(&self.audit_attributes) {
            if !GROUP_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown group key `{k}` (known: {})", GROUP_KEYS.join(", "))));
            }
        }
        Ok(())
    }
}

const GROUP_KEYS: [&str; 5] = ["hospital", "sex", "race", "ethnicity", "age"];

pub fn group_key(s: &StayFeatures, key: &str) -> String {
    let d = &s.demographics;
    match key {
        "hospital" => d.hospital_id.clone().unwrap_or_else(|| "unknown".into()),
        "sex" => d.sex.clone(),
        "race" => d.race.clone(),
        "ethnicity" => d.ethnicity.clone(),
        _ => age_bucket(d.age).to_string(),
    }
}

/// Model scores for a set of stays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub variant: Variant,
    pub stay_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl Predictions {
    fn lookup(&self, table: &FeatureTable, rows: &[usize]) -> Result<Vec<f64>> {
        let map: BTreeMap<&str, f64> = self.stay_ids.iter().map(String::as_str).zip(self.scores.iter().copied()).collect();
        rows.iter()
            .map(|&i| {
                let id = &table.stays[i].stay_id;
                map.get(id.as_str()).copied().ok_or_else(|| {
                    Error::Data(format!("{} predictions lack stay `{id}`", self.variant.name()))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantEvaluation {
    pub variant: Variant,
    pub threshold: f64,
    pub test: MetricReport,
    pub horizons: BTreeMap<String, MetricReport>,
    pub groups: BTreeMap<String, GroupReports>,
    pub versus_baselines: BTreeMap<String, DeLong>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEvaluation {
    pub score: String,
    pub threshold: f64,
    pub test: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub delong: DeLong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleFeature {
    pub column: String,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_val: usize,
    pub n_test: usize,
    pub n_test_pos: usize,
    pub variants: Vec<VariantEvaluation>,
    pub baselines: Vec<BaselineEvaluation>,
    pub comparisons: Vec<Comparison>,
    pub reference_score: String,
    pub disagreement: Option<DisagreementReport>,
    pub best_single_feature: Option<SingleFeature>,
}

impl Evaluation {
    pub fn variant(&self, v: Variant) -> Option<&VariantEvaluation> {
        self.variants.iter().find(|e| e.variant == v)
    }
}

/// Min-max rescale over `fit`, applied to `values`.
fn rescale(values: &[f64], fit: &[f64]) -> Vec<f64> {
    let lo = fit.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Highest test AUROC of any single input column, either orientation.
pub fn best_single_feature(inputs: &FittedInputs, table: &FeatureTable, rows: &[usize]) -> Result<Option<SingleFeature>> {
    let names: Vec<&str> = inputs.blocks.iter().map(|b| b.layout.name.as_str()).collect();
    let data = inputs.dataset(table, rows, &names)?;
    let mut best: Option<SingleFeature> = None;
    for (block, m) in inputs.blocks.iter().zip(&data.blocks) {
        for (j, col) in block.layout.columns.iter().enumerate() {
            let v: Vec<f64> = m.column(j).to_vec();
            let Some(a) = auroc(&v, &data.labels) else { continue };
            let a = a.max(1.0 - a);
            if best.as_ref().is_none_or(|b| a > b.auroc) {
                best = Some(SingleFeature {
                    column: format!("{}.{col}", block.layout.name),
                    auroc: a,
                });
            }
        }
    }
    Ok(best)
}

struct Scored {
    name: String,
    test: Vec<f64>,
    threshold: f64,
}

pub fn evaluate(
    table: &FeatureTable,
    split: &Split,
    predictions: &[Predictions],
    cfg: &EvalConfig,
    seed: u64,
    inputs: Option<&FittedInputs>,
) -> Result<Evaluation> {
    cfg.validate()?;
    let val_rows = table.rows(&split.val)?;
    let test_rows = table.rows(&split.test)?;
    let val_labels = table.labels(&val_rows);
    let test_labels = table.labels(&test_rows);
    let boot = BootstrapConfig {
        resamples: cfg.resamples,
        seed: derive_seed(seed, "bootstrap"),
        method: cfg.ci_method,
    };
    let death: Vec<Option<f64>> = test_rows.iter().map(|&i| table.stays[i].death_h).collect();

    let mut baselines = Vec::new();
    let mut base_scored = Vec::new();
    if !table.score_columns.is_empty() {
        for name in &cfg.baselines {
            let raw = |rows: &[usize]| -> Result<Vec<f64>> {
                rows.iter()
                    .map(|&i| table.stays[i].score(name).ok_or_else(|| Error::Config(format!("unknown baseline score `{name}`"))))
                    .collect()
            };
            let (v, t) = (raw(&val_rows)?, raw(&test_rows)?);
            let both: Vec<f64> = v.iter().chain(&t).copied().collect();
            let (v, t) = (rescale(&v, &both), rescale(&t, &both));
            let threshold = select_threshold(&v, &val_labels, cfg.target_sensitivity)?;
            baselines.push(BaselineEvaluation {
                score: name.clone(),
                threshold,
                test: metric_report(&t, &test_labels, threshold, &boot)?,
            });
            base_scored.push(Scored {
                name: name.clone(),
                test: t,
                threshold,
            });
        }
    }

    let mut variants = Vec::new();
    let mut model_scored = Vec::new();
    for p in predictions {
        let v = p.lookup(table, &val_rows)?;
        let t = p.lookup(table, &test_rows)?;
        let threshold = select_threshold(&v, &val_labels, cfg.target_sensitivity)?;
        let horizons = evaluate_by_horizon(&t, &death, threshold, Some(&boot))?;
        let mut groups = BTreeMap::new();
        for key in &cfg.group_keys {
            let keys: Vec<String> = test_rows.iter().map(|&i| group_key(&table.stays[i], key)).collect();
            groups.insert(key.clone(), evaluate_by_group(&t, &test_labels, &keys, threshold, cfg.min_group_n, Some(&boot))?);
        }
        let mut versus = BTreeMap::new();
        for b in &base_scored {
            versus.insert(b.name.clone(), delong_test(&t, &b.test, &test_labels)?);
        }
        variants.push(VariantEvaluation {
            variant: p.variant,
            threshold,
            test: metric_report(&t, &test_labels, threshold, &boot)?,
            horizons: HORIZON_NAMES.iter().map(|n| n.to_string()).zip(horizons).collect(),
            groups,
            versus_baselines: versus,
        });
        model_scored.push(Scored {
            name: p.variant.name().to_string(),
            test: t,
            threshold,
        });
    }

    let mut comparisons = Vec::new();
    for (i, a) in model_scored.iter().enumerate() {
        for b in &model_scored[i + 1..] {
            comparisons.push(Comparison {
                a: a.name.clone(),
                b: b.name.clone(),
                delong: delong_test(&a.test, &b.test, &test_labels)?,
            });
        }
    }

    let primary = model_scored
        .iter()
        .find(|s| s.name == Variant::Combined.name())
        .or(model_scored.last());
    let reference = base_scored.iter().find(|b| b.name == cfg.reference_score);
    let disagreement = match (primary, reference) {
        (Some(m), Some(r)) => Some(disagreement_analysis(
            &m.test,
            &r.test,
            &test_labels,
            (m.threshold, r.threshold),
            cfg.top_fraction,
        )?),
        _ => None,
    };

    let best_single_feature = match inputs {
        Some(f) => best_single_feature(f, table, &test_rows)?,
        None => None,
    };

    Ok(Evaluation {
        n_val: val_rows.len(),
        n_test: test_rows.len(),
        n_test_pos: test_labels.iter().filter(|l| **l).count(),
        variants,
        baselines,
        comparisons,
        reference_score: cfg.reference_score.clone(),
        disagreement,
        best_single_feature,
    })
}

/// Bias audit of one model's test predictions at its validation threshold.
pub fn audit(table: &FeatureTable, split: &Split, predictions: &Predictions, cfg: &EvalConfig) -> Result<Vec<BiasAudit>> {
    cfg.validate()?;
    let val_rows = table.rows(&split.val)?;
    let test_rows = table.rows(&split.test)?;
    let threshold = select_threshold(&predictions.lookup(table, &val_rows)?, &table.labels(&val_rows), cfg.target_sensitivity)?;
    let scores = predictions.lookup(table, &test_rows)?;
    let labels = table.labels(&test_rows);
    cfg.audit_attributes
        .iter()
        .map(|attr| {
            let groups: Vec<String> = test_rows.iter().map(|&i| group_key(&table.stays[i], attr)).collect();
            bias_audit(attr, &scores, &labels, &groups, threshold)
        })
        .collect()
}
