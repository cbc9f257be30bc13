use std::collections::BTreeMap;

use serde::Deserialize;

use super::ClinicalSnapshot;
use crate::error::{Error, Result};

pub const DEFAULT_TABLES: &str = include_str!("../../data/scores.toml");

/// One point band. All given bounds must hold.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub lt: Option<f64>,
    pub le: Option<f64>,
    pub gt: Option<f64>,
    pub ge: Option<f64>,
    pub eq: Option<f64>,
    /// Snapshot flag that must be set for the band to apply.
    pub when: Option<String>,
    pub points: u32,
}

impl Band {
    fn matches(&self, v: f64, snap: &ClinicalSnapshot) -> bool {
        self.lt.is_none_or(|b| v < b)
            && self.le.is_none_or(|b| v <= b)
            && self.gt.is_none_or(|b| v > b)
            && self.ge.is_none_or(|b| v >= b)
            && self.eq.is_none_or(|b| v == b)
            && self.when.as_deref().is_none_or(|f| snap.flag(f))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub component: String,
    pub variable: String,
    pub bands: Vec<Band>,
}

impl Row {
    fn points_for(&self, v: f64, snap: &ClinicalSnapshot) -> u32 {
        self.bands
            .iter()
            .find(|b| b.matches(v, snap))
            .map(|b| b.points)
            .unwrap_or(0)
    }

    /// Worse of the points at the variable's minimum and maximum.
    pub fn points(&self, snap: &ClinicalSnapshot) -> u32 {
        match snap.get(&self.variable) {
            None => 0,
            Some(x) => self.points_for(x.min, snap).max(self.points_for(x.max, snap)),
        }
    }
}

/// A point-table score: components summed, rows within a component maxed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub name: String,
    pub rows: Vec<Row>,
}

impl ScoreTable {
    pub fn components(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.component.as_str()) {
                out.push(&r.component);
            }
        }
        out
    }

    pub fn component_points(&self, snap: &ClinicalSnapshot) -> BTreeMap<String, u32> {
        let mut out: BTreeMap<String, u32> = BTreeMap::new();
        for r in &self.rows {
            let p = r.points(snap);
            let e = out.entry(r.component.clone()).or_default();
            *e = (*e).max(p);
        }
        out
    }

    pub fn score(&self, snap: &ClinicalSnapshot) -> u32 {
        self.component_points(snap).values().sum()
    }

    /// Largest attainable score.
    pub fn max_points(&self) -> u32 {
        let mut per: BTreeMap<&str, u32> = BTreeMap::new();
        for r in &self.rows {
            let m = r.bands.iter().map(|b| b.points).max().unwrap_or(0);
            let e = per.entry(&r.component).or_default();
            *e = (*e).max(m);
        }
        per.values().sum()
    }
}

#[derive(Debug, Deserialize)]
struct TablesDoc {
    sofa: Vec<Row>,
    saps2: Vec<Row>,
    oasis: Vec<Row>,
    apache2: Vec<Row>,
    sirs: Vec<Row>,
    #[serde(default)]
    flags: BTreeMap<String, Vec<String>>,
}

/// All score tables plus the comorbidity-derived flag definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTables {
    pub sofa: ScoreTable,
    pub saps2: ScoreTable,
    pub oasis: ScoreTable,
    pub apache2: ScoreTable,
    pub sirs: ScoreTable,
    /// Flag name -> comorbidity condition names that set it.
    pub flags: BTreeMap<String, Vec<String>>,
}

impl ScoreTables {
    pub fn parse(doc: &str) -> Result<Self> {
        let d: TablesDoc = toml::from_str(doc)?;
        let table = |name: &str, rows: Vec<Row>| -> Result<ScoreTable> {
            for r in &rows {
                if r.bands.is_empty() {
                    return Err(Error::Config(format!("{name}: row `{}` has no bands", r.variable)));
                }
            }
            Ok(ScoreTable {
                name: name.to_string(),
                rows,
            })
        };
        Ok(ScoreTables {
            sofa: table("sofa", d.sofa)?,
            saps2: table("saps2", d.saps2)?,
            oasis: table("oasis", d.oasis)?,
            apache2: table("apache2", d.apache2)?,
            sirs: table("sirs", d.sirs)?,
            flags: d.flags,
        })
    }

    pub fn default_tables() -> Self {
        Self::parse(DEFAULT_TABLES).expect("bundled score tables are valid")
    }
}
