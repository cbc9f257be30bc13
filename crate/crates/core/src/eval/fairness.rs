//! Per-group confusion rates at a fixed operating threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use crate::error::{Error, Result};

pub fn age_bucket(age: u32) -> &'static str {
    match age {
        0..=44 => "<=44",
        45..=60 => "45-60",
        61..=75 => "61-75",
        _ => ">=76",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub n: usize,
    pub n_pos: usize,
    pub confusion: Confusion,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

impl GroupRates {
    pub fn from_confusion(c: Confusion) -> Self {
        GroupRates {
            n: c.n(),
            n_pos: c.tp + c.fn_,
            confusion: c,
            tpr: c.tpr(),
            tnr: c.tnr(),
            fpr: c.fpr(),
            fnr: c.fnr(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAudit {
    pub attribute: String,
    pub threshold: f64,
    pub overall: GroupRates,
    pub groups: BTreeMap<String, GroupRates>,
}

pub fn bias_audit(attribute: &str, scores: &[f64], labels: &[bool], groups: &[String], threshold: f64) -> Result<BiasAudit> {
    if scores.len() != labels.len() || groups.len() != labels.len() {
        return Err(Error::Data("scores, labels and group labels differ in length".into()));
    }
    let mut by: BTreeMap<String, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((s, l), g) in scores.iter().zip(labels).zip(groups) {
        let e = by.entry(g.clone()).or_default();
        e.0.push(*s);
        e.1.push(*l);
    }
    Ok(BiasAudit {
        attribute: attribute.to_string(),
        threshold,
        overall: GroupRates::from_confusion(Confusion::at(scores, labels, threshold)),
        groups: by
            .into_iter()
            .map(|(g, (s, l))| (g, GroupRates::from_confusion(Confusion::at(&s, &l, threshold))))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        assert_eq!(age_bucket(44), "<=44");
        assert_eq!(age_bucket(45), "45-60");
        assert_eq!(age_bucket(75), "61-75");
        assert_eq!(age_bucket(76), ">=76");
    }

    #[test]
    fn single_group_equals_global() {
        let s = [0.9, 0.2, 0.6, 0.4];
        let l = [true, false, false, true];
        let g = vec!["x".to_string(); 4];
        let a = bias_audit("sex", &s, &l, &g, 0.5).unwrap();
        assert_eq!(a.groups["x"], a.overall);
        assert_eq!(a.overall.tpr, Some(0.5));
        assert_eq!(a.overall.fpr, Some(0.5));
    }
}
