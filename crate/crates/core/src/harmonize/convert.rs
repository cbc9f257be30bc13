use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EventValue, RawEvent, SchemaMap};

pub const DEFAULT_RANGES: &str = include_str!("../../data/valid_ranges.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidRange {
    pub min: f64,
    pub max: f64,
}

impl ValidRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Clinically valid range per canonical variable, in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidRangeTable {
    pub ranges: BTreeMap<String, ValidRange>,
}

#[derive(Deserialize)]
struct RangeDoc {
    ranges: BTreeMap<String, [f64; 2]>,
}

impl ValidRangeTable {
    pub fn parse(doc: &str) -> Result<Self> {
        let doc: RangeDoc = toml::from_str(doc)?;
        let mut ranges = BTreeMap::new();
        for (k, [min, max]) in doc.ranges {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(Error::Config(format!("valid range for `{k}` must satisfy min < max")));
            }
            ranges.insert(k, ValidRange { min, max });
        }
        Ok(ValidRangeTable { ranges })
    }

    pub fn default_table() -> Self {
        Self::parse(DEFAULT_RANGES).expect("bundled range table is valid")
    }

    pub fn get(&self, variable: &str) -> Option<ValidRange> {
        self.ranges.get(variable).copied()
    }
}

/// Why an event was set aside instead of harmonized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineReason {
    UnknownUnit,
    UnknownCategory,
    NegativeVolume,
    NonNumeric,
}

/// Express an event's value in the canonical unit of its variable.
///
/// Events without a unit are taken to be in canonical units already.
pub fn convert_units(e: &RawEvent, map: &SchemaMap) -> std::result::Result<RawEvent, QuarantineReason> {
    let variable = if map.is_urine_alias(&e.variable) {
        super::vars::URINE_OUTPUT
    } else {
        e.variable.as_str()
    };
    let Some(unit) = e.unit.as_deref() else {
        return Ok(e.clone());
    };
    let canonical_unit = map.var(variable).and_then(|v| v.unit.as_deref());
    if canonical_unit == Some(unit) {
        return Ok(e.clone());
    }
    let Some(conv) = map.conversion(variable, unit) else {
        return Err(QuarantineReason::UnknownUnit);
    };
    let EventValue::Numeric(v) = e.value else {
        return Err(QuarantineReason::NonNumeric);
    };
    let mut out = e.clone();
    out.value = EventValue::Numeric(conv.forward(v));
    out.unit = canonical_unit.map(str::to_string);
    Ok(out)
}

/// Drop values outside the variable's valid range. Returns the kept values
/// and the number removed. Variables absent from the table pass through.
pub fn filter_outliers(values: &[f64], range: Option<ValidRange>) -> (Vec<f64>, usize) {
    match range {
        None => (values.to_vec(), 0),
        Some(r) => {
            let kept: Vec<f64> = values.iter().copied().filter(|v| r.contains(*v)).collect();
            let removed = values.len() - kept.len();
            (kept, removed)
        }
    }
}
