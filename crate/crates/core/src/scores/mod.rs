//! Severity scores from the first 24 hours.

mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use table::{Band, Row, ScoreTable, ScoreTables, DEFAULT_TABLES};

use crate::harmonize::{vars, AdmissionInfo, ComorbidityMap, HourlyGrid, Mark};
use crate::ingest::VarKind;

/// Snapshot variables that are not grid columns.
pub mod derived {
    pub const AGE: &str = "Age";
    pub const URINE_24H: &str = "UrineOutput24h";
    pub const PF_RATIO: &str = "PFRatio";
    pub const AADO2: &str = "AaDO2";
    pub const PAO2_LOW_FIO2: &str = "PaO2LowFiO2";
    pub const SHOCK_INDEX: &str = "ShockIndex";
    pub const CHRONIC: &str = "ChronicOrganInsufficiency";
    pub const CHRONIC_ELECTIVE: &str = "ChronicElective";
    pub const CHRONIC_NONELECTIVE: &str = "ChronicNonElective";
}

/// Barometric minus water vapour pressure at sea level, mmHg.
const ALVEOLAR_PRESSURE: f64 = 713.0;
const RESPIRATORY_QUOTIENT: f64 = 0.8;
const HIGH_FIO2: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
}

/// Worst-in-window values: the minimum and maximum of each variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClinicalSnapshot {
    pub values: BTreeMap<String, Extremes>,
}

impl ClinicalSnapshot {
    pub fn get(&self, name: &str) -> Option<Extremes> {
        self.values.get(name).copied()
    }

    pub fn set(&mut self, name: &str, v: f64) -> &mut Self {
        self.values.insert(name.to_string(), Extremes { min: v, max: v });
        self
    }

    pub fn set_range(&mut self, name: &str, min: f64, max: f64) -> &mut Self {
        self.values.insert(name.to_string(), Extremes { min, max });
        self
    }

    pub fn observe(&mut self, name: &str, v: f64) {
        if !v.is_finite() {
            return;
        }
        self.values
            .entry(name.to_string())
            .and_modify(|e| {
                e.min = e.min.min(v);
                e.max = e.max.max(v);
            })
            .or_insert(Extremes { min: v, max: v });
    }

    pub fn flag(&self, name: &str) -> bool {
        self.get(name).is_some_and(|e| e.max >= 1.0)
    }
}

/// Build a snapshot from a grid that has not been filled yet (missing cells
/// are skipped) plus admission attributes and comorbidities.
pub fn build_snapshot(
    grid: &HourlyGrid,
    admission: &AdmissionInfo,
    age: u32,
    comorbidities: &[u8],
    comorbidity_map: &ComorbidityMap,
    tables: &ScoreTables,
) -> ClinicalSnapshot {
    let mut snap = ClinicalSnapshot::default();
    for (c, col) in grid.columns.iter().enumerate() {
        if col.kind == VarKind::Categorical {
            continue;
        }
        for row in &grid.rows {
            if let (Some(v), false) = (row[c].value, row[c].is_missing()) {
                snap.observe(&col.name, v);
            }
        }
    }

    // Volumes add up, so held copies must not be counted.
    if let Some(c) = grid.col(vars::URINE_OUTPUT) {
        let observed: Vec<f64> = grid
            .rows
            .iter()
            .filter(|r| r[c].mark == Mark::Observed)
            .filter_map(|r| r[c].value)
            .collect();
        snap.values.remove(vars::URINE_OUTPUT);
        if !observed.is_empty() {
            snap.set(derived::URINE_24H, observed.iter().sum());
        }
    }

    let vent_mode_charted = grid
        .col(vars::VENT_MODE)
        .is_some_and(|c| grid.rows.iter().any(|r| !r[c].is_missing()));
    if vent_mode_charted {
        snap.observe(vars::VENTILATED, 1.0);
    }

    for h in 0..grid.n_rows() {
        let v = |n: &str| grid.get(h, n).filter(|c| !c.is_missing()).and_then(|c| c.value);
        let (pao2, fio2, paco2) = (v(vars::PAO2), v(vars::FIO2), v(vars::PACO2));
        if let (Some(p), Some(f)) = (pao2, fio2) {
            if f > 0.0 {
                snap.observe(derived::PF_RATIO, p / f);
            }
        }
        match (pao2, fio2) {
            (Some(p), Some(f)) if f >= HIGH_FIO2 => {
                if let Some(pc) = paco2 {
                    snap.observe(derived::AADO2, f * ALVEOLAR_PRESSURE - pc / RESPIRATORY_QUOTIENT - p);
                }
            }
            (Some(p), _) => snap.observe(derived::PAO2_LOW_FIO2, p),
            _ => {}
        }
        if let (Some(hr), Some(sbp)) = (v(vars::HEART_RATE), v(vars::SBP)) {
            if sbp > 0.0 {
                snap.observe(derived::SHOCK_INDEX, hr / sbp);
            }
        }
    }

    snap.set(derived::AGE, age as f64);
    if let Some(t) = admission.admission_type {
        snap.set(vars::ADMISSION_TYPE, t as f64);
    }
    if let Some(l) = admission.pre_icu_los_h {
        snap.set(vars::PRE_ICU_LOS, l);
    }
    for (flag, conditions) in &tables.flags {
        let set = conditions
            .iter()
            .filter_map(|n| comorbidity_map.index_of(n))
            .any(|i| comorbidities.get(i) == Some(&1));
        snap.set(flag, set as u8 as f64);
    }
    if let Some(t) = admission.admission_type {
        let chronic = snap.flag(derived::CHRONIC);
        snap.set(derived::CHRONIC_ELECTIVE, (chronic && t == 0) as u8 as f64);
        snap.set(derived::CHRONIC_NONELECTIVE, (chronic && t != 0) as u8 as f64);
    }
    snap
}

pub fn compute_sofa(snap: &ClinicalSnapshot, tables: &ScoreTables) -> u32 {
    tables.sofa.score(snap)
}

pub fn compute_saps2(snap: &ClinicalSnapshot, tables: &ScoreTables) -> u32 {
    tables.saps2.score(snap)
}

pub fn compute_oasis(snap: &ClinicalSnapshot, tables: &ScoreTables) -> u32 {
    tables.oasis.score(snap)
}

pub fn compute_apache2(snap: &ClinicalSnapshot, tables: &ScoreTables) -> u32 {
    tables.apache2.score(snap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScores {
    pub sirs: u32,
    pub shock_index: Option<f64>,
    pub pf_ratio: Option<f64>,
}

/// SIRS count, worst shock index and worst PaO2/FiO2.
pub fn compute_derived(snap: &ClinicalSnapshot, tables: &ScoreTables) -> DerivedScores {
    let shock_index = snap.get(derived::SHOCK_INDEX).map(|e| e.max).or_else(|| {
        let hr = snap.get(vars::HEART_RATE)?.max;
        let sbp = snap.get(vars::SBP)?.min;
        (sbp > 0.0).then(|| hr / sbp)
    });
    let pf_ratio = snap.get(derived::PF_RATIO).map(|e| e.min).or_else(|| {
        let pao2 = snap.get(vars::PAO2)?.min;
        let fio2 = snap.get(vars::FIO2)?.max;
        (fio2 > 0.0).then(|| pao2 / fio2)
    });
    DerivedScores {
        sirs: tables.sirs.score(snap),
        shock_index,
        pf_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScorePanel {
    pub sofa: u32,
    pub saps2: u32,
    pub oasis: u32,
    pub apache2: u32,
    pub sirs: u32,
    pub shock_index: Option<f64>,
    pub pf_ratio: Option<f64>,
}

pub const PANEL_COLUMNS: [&str; 9] = [
    "sofa",
    "saps2",
    "oasis",
    "apache2",
    "sirs",
    "shock_index",
    "shock_index__absent",
    "pf_ratio",
    "pf_ratio__absent",
];

impl RiskScorePanel {
    pub fn compute(snap: &ClinicalSnapshot, tables: &ScoreTables) -> Self {
        let d = compute_derived(snap, tables);
        RiskScorePanel {
            sofa: compute_sofa(snap, tables),
            saps2: compute_saps2(snap, tables),
            oasis: compute_oasis(snap, tables),
            apache2: compute_apache2(snap, tables),
            sirs: d.sirs,
            shock_index: d.shock_index,
            pf_ratio: d.pf_ratio,
        }
    }

    /// Model-input encoding in [`PANEL_COLUMNS`] order.
    pub fn to_vector(&self) -> Vec<f64> {
        let pair = |v: Option<f64>| match v {
            Some(x) if x.is_finite() => [x, 0.0],
            _ => [0.0, 1.0],
        };
        let mut out = vec![
            self.sofa as f64,
            self.saps2 as f64,
            self.oasis as f64,
            self.apache2 as f64,
            self.sirs as f64,
        ];
        out.extend(pair(self.shock_index));
        out.extend(pair(self.pf_ratio));
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "sofa" => Some(self.sofa as f64),
            "saps2" => Some(self.saps2 as f64),
            "oasis" => Some(self.oasis as f64),
            "apache2" => Some(self.apache2 as f64),
            "sirs" => Some(self.sirs as f64),
            "shock_index" => self.shock_index,
            "pf_ratio" => self.pf_ratio,
            _ => None,
        }
    }
}
