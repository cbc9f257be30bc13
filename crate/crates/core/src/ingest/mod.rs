//! Raw event/static ingestion, stay assembly and synthetic cohort generation.

mod assemble;
mod csvio;
mod schema;
mod synth;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_stays, attach_note_flags, IngestReport, StaticRow};
pub use csvio::{
    read_events, read_notes, read_statics, write_events, write_notes, write_statics, NoteRow,
};
pub use schema::{load_schema_map, CanonicalVar, SchemaMap, UnitConversion, VarKind};
pub use synth::{generate_synthetic_cohort, GenConfig, SyntheticCohort, PLANTED_FEATURES};

/// Width of the observation window, in hours since ICU admission.
pub const OBSERVATION_HOURS: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventValue {
    Numeric(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub stay_id: String,
    pub variable: String,
    /// Hours since ICU admission.
    pub time_offset: f64,
    pub value: EventValue,
    pub unit: Option<String>,
}

impl RawEvent {
    pub fn numeric(stay_id: &str, variable: &str, time_offset: f64, value: f64) -> Self {
        RawEvent {
            stay_id: stay_id.to_string(),
            variable: variable.to_string(),
            time_offset,
            value: EventValue::Numeric(value),
            unit: None,
        }
    }

    pub fn text(stay_id: &str, variable: &str, time_offset: f64, value: &str) -> Self {
        RawEvent {
            stay_id: stay_id.to_string(),
            variable: variable.to_string(),
            time_offset,
            value: EventValue::Text(value.to_string()),
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: &str) -> Self {
        self.unit = Some(unit.to_string());
        self
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self.value {
            EventValue::Numeric(v) => Some(v),
            EventValue::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.value {
            EventValue::Text(s) => Some(s),
            EventValue::Numeric(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModalityFlags {
    pub has_static: bool,
    pub has_timevariant: bool,
    pub has_notes: bool,
}

impl ModalityFlags {
    /// Key of the modality-availability subgroup used for stratified splitting.
    pub fn subgroup_key(&self) -> String {
        format!(
            "static={}|timevariant={}|notes={}",
            self.has_static as u8, self.has_timevariant as u8, self.has_notes as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRecord {
    pub stay_id: String,
    pub age: u32,
    pub sex: String,
    pub race: String,
    pub ethnicity: String,
    pub comorbidity_codes: Vec<String>,
    pub events: Vec<RawEvent>,
    pub los_hours: f64,
    pub died_inpatient: bool,
    pub time_to_death_hours: Option<f64>,
    pub hospital_id: Option<String>,
    pub admit_offset: Option<f64>,
    pub modality_flags: ModalityFlags,
}
