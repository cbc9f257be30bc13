//! Raw events to a canonical 24-hour grid.

mod comorbidity;
mod convert;
mod grid;
mod meds;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use comorbidity::{encode_comorbidities, ComorbidityMap, Condition, N_CONDITIONS};
pub use convert::{
    convert_units, filter_outliers, QuarantineReason, ValidRange, ValidRangeTable,
};
pub use grid::{Cell, Column, CompactGrid, HourlyGrid, Mark, Stage};
pub use meds::{extract_med_flags, MedFlags, MedLexicon};

use crate::ingest::{EventValue, RawEvent, SchemaMap, StayRecord, VarKind, OBSERVATION_HOURS};

/// Free-text medication administrations share this variable name.
pub const MEDICATION_VAR: &str = "Medication";

pub const GRID_HOURS: usize = 24;

/// Canonical names the rest of the pipeline refers to directly.
pub mod vars {
    pub const HEART_RATE: &str = "HeartRate";
    pub const SBP: &str = "SBP";
    pub const DBP: &str = "DBP";
    pub const MAP: &str = "MAP";
    pub const RESP_RATE: &str = "RespRate";
    pub const SPO2: &str = "SpO2";
    pub const TEMPERATURE: &str = "Temperature";
    pub const GCS_TOTAL: &str = "GCS_Total";
    pub const GCS_EYE: &str = "GCS_Eye";
    pub const GCS_VERBAL: &str = "GCS_Verbal";
    pub const GCS_MOTOR: &str = "GCS_Motor";
    pub const RASS: &str = "RASS";
    pub const LACTATE: &str = "Lactate";
    pub const BUN: &str = "BUN";
    pub const CREATININE: &str = "Creatinine";
    pub const SODIUM: &str = "Sodium";
    pub const POTASSIUM: &str = "Potassium";
    pub const BICARBONATE: &str = "Bicarbonate";
    pub const GLUCOSE: &str = "Glucose";
    pub const WBC: &str = "WBC";
    pub const PLATELETS: &str = "Platelets";
    pub const HEMOGLOBIN: &str = "Hemoglobin";
    pub const HEMATOCRIT: &str = "Hematocrit";
    pub const BILI_TOTAL: &str = "BilirubinTotal";
    pub const BILI_DIRECT: &str = "BilirubinDirect";
    pub const PAO2: &str = "PaO2";
    pub const PACO2: &str = "PaCO2";
    pub const FIO2: &str = "FiO2";
    pub const PH: &str = "pH";
    pub const URINE_OUTPUT: &str = "UrineOutput";
    pub const NOREPINEPHRINE: &str = "NorepinephrineRate";
    pub const EPINEPHRINE: &str = "EpinephrineRate";
    pub const DOPAMINE: &str = "DopamineRate";
    pub const DOBUTAMINE: &str = "DobutamineRate";
    pub const VASOPRESSOR: &str = "Vasopressor";
    pub const ANTIBIOTIC: &str = "Antibiotic";
    pub const VENTILATED: &str = "Ventilated";
    pub const VENT_MODE: &str = "VentMode";
    pub const ADMISSION_TYPE: &str = "AdmissionType";
    pub const PRE_ICU_LOS: &str = "PreICULOS";
}

/// Variables kept at native resolution for vital-sign feature engineering.
pub const HF_SIGNALS: [&str; 3] = [vars::HEART_RATE, vars::SPO2, vars::RESP_RATE];

/// Grid columns: every canonical variable flagged as a grid column, in name order.
pub fn grid_columns(map: &SchemaMap) -> Vec<Column> {
    map.canonical
        .iter()
        .filter(|(_, v)| v.grid)
        .map(|(name, v)| Column {
            name: name.clone(),
            kind: v.kind,
            medication: v.medication,
        })
        .collect()
}

fn window(t: f64) -> Option<usize> {
    (0.0..OBSERVATION_HOURS).contains(&t).then(|| t.floor() as usize)
}

/// Aggregate numeric events into hourly cells: mean for continuous, mode
/// (smallest code on ties) for categorical, max for binary.
///
/// Events must already be converted, filtered and numerically encoded.
pub fn bin_hourly(stay_id: &str, events: &[RawEvent], columns: Vec<Column>) -> HourlyGrid {
    let mut grid = HourlyGrid::empty(stay_id, columns, GRID_HOURS);
    let index: BTreeMap<&str, usize> = grid
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    let mut buckets: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); grid.columns.len()]; GRID_HOURS];
    for e in events {
        let (Some(&c), Some(v), Some(h)) = (
            index.get(e.variable.as_str()),
            e.as_numeric(),
            window(e.time_offset),
        ) else {
            continue;
        };
        buckets[h][c].push(v);
    }
    for (h, row) in buckets.iter().enumerate() {
        for (c, vals) in row.iter().enumerate() {
            if vals.is_empty() {
                continue;
            }
            let v = match grid.columns[c].kind {
                VarKind::Continuous => vals.iter().sum::<f64>() / vals.len() as f64,
                VarKind::Binary => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                VarKind::Categorical => mode(vals),
            };
            grid.rows[h][c] = Cell::observed(v);
        }
    }
    grid.stages.push(Stage::Binned);
    grid
}

fn mode(vals: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in vals {
        *counts.entry(v.round() as i64).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    // BTreeMap iterates in ascending code order, so the first hit is the smallest.
    counts
        .into_iter()
        .find(|(_, n)| *n == best)
        .map(|(k, _)| k as f64)
        .unwrap_or(f64::NAN)
}

/// Sum every urine alias (and canonical urine rows) per hour into one series.
/// Returns hourly totals and the number of negative volumes quarantined.
pub fn unify_urine_output(events: &[RawEvent], map: &SchemaMap) -> ([Option<f64>; GRID_HOURS], usize) {
    let mut out = [None; GRID_HOURS];
    let mut negative = 0;
    for e in events {
        if !(map.is_urine_alias(&e.variable) || e.variable == vars::URINE_OUTPUT) {
            continue;
        }
        let (Some(v), Some(h)) = (e.as_numeric(), window(e.time_offset)) else {
            continue;
        };
        if v < 0.0 {
            negative += 1;
            continue;
        }
        *out[h].get_or_insert(0.0) += v;
    }
    (out, negative)
}

/// Counts from harmonizing one or more stays.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarmonizeReport {
    pub events_in: usize,
    pub converted: usize,
    pub outliers_removed: usize,
    pub quarantined: BTreeMap<QuarantineReason, usize>,
    pub unmapped: usize,
    /// Variables seen with no valid-range entry.
    pub unranged: BTreeMap<String, usize>,
}

impl HarmonizeReport {
    pub fn merge(&mut self, other: &HarmonizeReport) {
        self.events_in += other.events_in;
        self.converted += other.converted;
        self.outliers_removed += other.outliers_removed;
        self.unmapped += other.unmapped;
        for (k, v) in &other.quarantined {
            *self.quarantined.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.unranged {
            *self.unranged.entry(k.clone()).or_default() += v;
        }
    }

    pub fn quarantined_total(&self) -> usize {
        self.quarantined.values().sum()
    }
}

/// Attributes recorded once at admission rather than hourly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissionInfo {
    pub admission_type: Option<i64>,
    pub pre_icu_los_h: Option<f64>,
}

/// A high-frequency vital-sign series: (seconds since admission, value).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub times_s: Vec<f64>,
    pub values: Vec<f64>,
}

/// One stay after harmonization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonizedStay {
    pub grid: HourlyGrid,
    pub admission: AdmissionInfo,
    pub signals: BTreeMap<String, Signal>,
    pub comorbidities: Vec<u8>,
}

/// Shared configuration for harmonizing stays.
#[derive(Debug, Clone)]
pub struct Harmonizer {
    pub map: SchemaMap,
    pub ranges: ValidRangeTable,
    pub lexicon: MedLexicon,
    pub comorbidity: ComorbidityMap,
}

impl Harmonizer {
    pub fn with_defaults() -> Self {
        Harmonizer {
            map: SchemaMap::default_map(),
            ranges: ValidRangeTable::default_table(),
            lexicon: MedLexicon::default_lexicon(),
            comorbidity: ComorbidityMap::default_map(),
        }
    }

    fn encode(&self, e: RawEvent) -> Result<RawEvent, QuarantineReason> {
        let Some(var) = self.map.var(&e.variable) else {
            return Ok(e);
        };
        match (&e.value, var.kind) {
            (EventValue::Numeric(_), _) => Ok(e),
            (EventValue::Text(t), VarKind::Categorical) => match var.encoding.get(t.trim()) {
                Some(code) => Ok(RawEvent {
                    value: EventValue::Numeric(*code as f64),
                    ..e
                }),
                None => Err(QuarantineReason::UnknownCategory),
            },
            (EventValue::Text(t), _) => match t.trim().parse::<f64>() {
                Ok(v) => Ok(RawEvent {
                    value: EventValue::Numeric(v),
                    ..e
                }),
                Err(_) => Err(QuarantineReason::NonNumeric),
            },
        }
    }

    /// Convert, filter, bin and flag one stay's events.
    pub fn harmonize_stay(&self, stay: &StayRecord) -> (HarmonizedStay, HarmonizeReport) {
        let mut report = HarmonizeReport {
            events_in: stay.events.len(),
            ..Default::default()
        };
        let mut clean = Vec::with_capacity(stay.events.len());
        let mut med_rows = Vec::new();
        for e in &stay.events {
            if e.variable == MEDICATION_VAR {
                med_rows.push(e.clone());
                continue;
            }
            let known = self.map.var(&e.variable).is_some() || self.map.is_urine_alias(&e.variable);
            if !known {
                report.unmapped += 1;
                continue;
            }
            let converted = match convert_units(e, &self.map).and_then(|c| self.encode(c)) {
                Ok(c) => c,
                Err(reason) => {
                    *report.quarantined.entry(reason).or_default() += 1;
                    continue;
                }
            };
            if converted.unit != e.unit {
                report.converted += 1;
            }
            let is_categorical = self
                .map
                .var(&converted.variable)
                .is_some_and(|v| v.kind == VarKind::Categorical);
            if let Some(v) = converted.as_numeric() {
                let range_var = if self.map.is_urine_alias(&converted.variable) {
                    vars::URINE_OUTPUT
                } else {
                    converted.variable.as_str()
                };
                match self.ranges.get(range_var) {
                    Some(r) if !r.contains(v) && !(range_var == vars::URINE_OUTPUT && v < 0.0) => {
                        report.outliers_removed += 1;
                        continue;
                    }
                    None if !is_categorical => {
                        *report.unranged.entry(range_var.to_string()).or_default() += 1;
                    }
                    _ => {}
                }
            }
            clean.push(converted);
        }

        let mut admission = AdmissionInfo::default();
        for e in &clean {
            match e.variable.as_str() {
                vars::ADMISSION_TYPE if admission.admission_type.is_none() => {
                    admission.admission_type = e.as_numeric().map(|v| v.round() as i64);
                }
                vars::PRE_ICU_LOS if admission.pre_icu_los_h.is_none() => {
                    admission.pre_icu_los_h = e.as_numeric();
                }
                _ => {}
            }
        }

        let mut signals = BTreeMap::new();
        for name in HF_SIGNALS {
            let mut pts: Vec<(f64, f64)> = clean
                .iter()
                .filter(|e| e.variable == name && window(e.time_offset).is_some())
                .filter_map(|e| e.as_numeric().map(|v| (e.time_offset * 3600.0, v)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            signals.insert(
                name.to_string(),
                Signal {
                    times_s: pts.iter().map(|p| p.0).collect(),
                    values: pts.iter().map(|p| p.1).collect(),
                },
            );
        }

        let (urine, negative) = unify_urine_output(&clean, &self.map);
        if negative > 0 {
            *report
                .quarantined
                .entry(QuarantineReason::NegativeVolume)
                .or_default() += negative;
        }
        let binnable: Vec<RawEvent> = clean
            .into_iter()
            .filter(|e| !self.map.is_urine_alias(&e.variable) && e.variable != vars::URINE_OUTPUT)
            .collect();
        let mut grid = bin_hourly(&stay.stay_id, &binnable, grid_columns(&self.map));
        for (h, v) in urine.iter().enumerate() {
            if let Some(v) = v {
                grid.set(h, vars::URINE_OUTPUT, Cell::observed(*v));
            }
        }

        // Flags mark administration hours only; later holding carries them forward.
        let flags = extract_med_flags(&med_rows, &self.lexicon);
        for h in 0..GRID_HOURS {
            if flags.vasopressor[h] == 1 {
                grid.set(h, vars::VASOPRESSOR, Cell::observed(1.0));
            }
            if flags.antibiotic[h] == 1 {
                grid.set(h, vars::ANTIBIOTIC, Cell::observed(1.0));
            }
        }
        for h in 0..GRID_HOURS {
            let pressor_rate = [vars::NOREPINEPHRINE, vars::EPINEPHRINE, vars::DOPAMINE, vars::DOBUTAMINE]
                .iter()
                .any(|v| grid.value(h, v).is_some_and(|x| x > 0.0));
            if pressor_rate {
                grid.set(h, vars::VASOPRESSOR, Cell::observed(1.0));
            }
        }

        let comorbidities = encode_comorbidities(&stay.comorbidity_codes, &self.comorbidity);
        (
            HarmonizedStay {
                grid,
                admission,
                signals,
                comorbidities,
            },
            report,
        )
    }
}
