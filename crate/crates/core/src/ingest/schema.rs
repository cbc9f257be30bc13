use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalVar {
    pub kind: VarKind,
    #[serde(default)]
    pub unit: Option<String>,
    /// Text category -> numeric code, for categorical variables.
    #[serde(default)]
    pub encoding: BTreeMap<String, i64>,
    /// Medication-like columns hold for 24 h instead of 12 h.
    #[serde(default)]
    pub medication: bool,
    /// Admission attributes (e.g. admission type) are not hourly grid columns.
    #[serde(default = "yes")]
    pub grid: bool,
}

fn yes() -> bool {
    true
}

/// Affine unit conversion: `canonical = (value + pre_offset) * scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitConversion {
    pub variable: String,
    pub from: String,
    pub scale: f64,
    #[serde(default)]
    pub pre_offset: f64,
    #[serde(default)]
    pub offset: f64,
}

impl UnitConversion {
    pub fn forward(&self, value: f64) -> f64 {
        (value + self.pre_offset) * self.scale + self.offset
    }

    pub fn inverse(&self, canonical: f64) -> f64 {
        (canonical - self.offset) / self.scale - self.pre_offset
    }
}

#[derive(Debug, Deserialize)]
struct SchemaDoc {
    #[serde(default = "default_source")]
    source: String,
    canonical: BTreeMap<String, CanonicalVar>,
    #[serde(default)]
    sources: BTreeMap<String, SourceDoc>,
    #[serde(default)]
    units: Vec<UnitConversion>,
    #[serde(default)]
    urine_aliases: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
struct SourceDoc {
    #[serde(default)]
    columns: BTreeMap<String, String>,
}

fn default_source() -> String {
    "default".to_string()
}

/// Source-column crosswalk, canonical variable catalogue and unit conversions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaMap {
    pub source: String,
    pub canonical: BTreeMap<String, CanonicalVar>,
    /// source name -> (source column -> canonical variable)
    pub columns: BTreeMap<String, BTreeMap<String, String>>,
    pub units: Vec<UnitConversion>,
    pub urine_aliases: Vec<String>,
}

pub const DEFAULT_SCHEMA: &str = include_str!("../../data/schema_map.toml");

impl SchemaMap {
    pub fn default_map() -> Self {
        load_schema_map(DEFAULT_SCHEMA).expect("bundled schema map is valid")
    }

    pub fn var(&self, name: &str) -> Option<&CanonicalVar> {
        self.canonical.get(name)
    }

    /// Map a column name from the active source onto its canonical name.
    /// Canonical names, urine aliases and the medication stream pass through.
    pub fn resolve(&self, column: &str) -> Option<&str> {
        if let Some(cols) = self.columns.get(&self.source) {
            if let Some(c) = cols.get(column) {
                return Some(c.as_str());
            }
        }
        if let Some((k, _)) = self.canonical.get_key_value(column) {
            return Some(k.as_str());
        }
        self.urine_aliases
            .iter()
            .find(|a| a.as_str() == column)
            .map(|a| a.as_str())
            .or((column == crate::harmonize::MEDICATION_VAR).then_some(crate::harmonize::MEDICATION_VAR))
    }

    pub fn conversion(&self, variable: &str, from: &str) -> Option<&UnitConversion> {
        self.units
            .iter()
            .find(|u| u.variable == variable && u.from == from)
    }

    pub fn is_urine_alias(&self, name: &str) -> bool {
        self.urine_aliases.iter().any(|a| a == name)
    }
}

/// Parse and validate a schema-map document (TOML).
pub fn load_schema_map(config_doc: &str) -> Result<SchemaMap> {
    let doc: SchemaDoc = toml::from_str(config_doc)?;

    let mut columns = BTreeMap::new();
    for (source, sdoc) in &doc.sources {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (col, canon) in &sdoc.columns {
            if !doc.canonical.contains_key(canon) {
                return Err(Error::Config(format!(
                    "source `{source}` column `{col}` maps to unknown canonical variable `{canon}`"
                )));
            }
            if let Some(prev) = seen.insert(canon.as_str(), col.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate canonical name `{canon}` in source `{source}`: columns `{prev}` and `{col}`"
                )));
            }
        }
        columns.insert(source.clone(), sdoc.columns.clone());
    }

    let mut pairs = BTreeSet::new();
    for u in &doc.units {
        let Some(var) = doc.canonical.get(&u.variable) else {
            return Err(Error::Config(format!(
                "unit conversion for unknown variable `{}`",
                u.variable
            )));
        };
        let Some(canon_unit) = var.unit.as_deref() else {
            return Err(Error::Config(format!(
                "unknown unit pair {} -> (none) for `{}`: variable has no canonical unit",
                u.from, u.variable
            )));
        };
        if u.from == canon_unit {
            return Err(Error::Config(format!(
                "unit conversion {} -> {} for `{}` is an identity entry",
                u.from, canon_unit, u.variable
            )));
        }
        if !(u.scale.is_finite() && u.scale != 0.0 && u.offset.is_finite() && u.pre_offset.is_finite()) {
            return Err(Error::Config(format!(
                "unit conversion {} -> {} for `{}` is not invertible",
                u.from, canon_unit, u.variable
            )));
        }
        if !pairs.insert((u.variable.clone(), u.from.clone())) {
            return Err(Error::Config(format!(
                "duplicate unit conversion {} for `{}`",
                u.from, u.variable
            )));
        }
    }

    for alias in &doc.urine_aliases {
        if doc.canonical.contains_key(alias) {
            return Err(Error::Config(format!(
                "urine alias `{alias}` collides with a canonical variable"
            )));
        }
    }

    Ok(SchemaMap {
        source: doc.source,
        canonical: doc.canonical,
        columns,
        units: doc.units,
        urine_aliases: doc.urine_aliases,
    })
}
