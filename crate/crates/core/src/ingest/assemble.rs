use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{ModalityFlags, NoteRow, RawEvent, SchemaMap, StayRecord, OBSERVATION_HOURS};

/// One row of `statics.csv`, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRow {
    pub stay_id: String,
    pub age: Option<u32>,
    pub sex: String,
    pub race: String,
    pub ethnicity: String,
    pub admit_dt_offset: Option<f64>,
    pub los_hours: Option<f64>,
    pub death_offset_h: Option<f64>,
    pub hospital_id: Option<String>,
    pub icd_codes: Vec<String>,
}

/// Counts for everything assembly kept, dropped or could not interpret.
///
/// `input_stays == returned + excluded_short + malformed` always holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub input_stays: usize,
    pub returned: usize,
    pub excluded_short: usize,
    pub malformed: usize,
    pub events_total: usize,
    pub events_retained: usize,
    pub events_unknown_stay: usize,
    pub events_after_window: usize,
    pub events_unmapped: usize,
    pub events_malformed: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn is_conserved(&self) -> bool {
        self.input_stays == self.returned + self.excluded_short + self.malformed
    }
}

/// Assemble qualifying stays (length of stay at least 24 h) with their
/// first-24 h events and in-hospital mortality label.
///
/// Output is sorted by `stay_id`; the function is pure in its inputs.
pub fn assemble_stays(
    events: Vec<RawEvent>,
    statics: &[StaticRow],
    map: &SchemaMap,
) -> (Vec<StayRecord>, IngestReport) {
    let mut report = IngestReport {
        input_stays: statics.len(),
        events_total: events.len(),
        ..Default::default()
    };

    let mut kept: BTreeMap<String, StayRecord> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for row in statics {
        if !seen.insert(row.stay_id.clone()) {
            report.malformed += 1;
            report.warnings.push(format!("duplicate stay_id `{}`", row.stay_id));
            continue;
        }
        let (Some(los), Some(age)) = (row.los_hours, row.age) else {
            report.malformed += 1;
            let msg = format!(
                "stay `{}` dropped: missing discharge (los_hours) or age",
                row.stay_id
            );
            warn!("{msg}");
            report.warnings.push(msg);
            continue;
        };
        if !los.is_finite() || los < 0.0 {
            report.malformed += 1;
            report
                .warnings
                .push(format!("stay `{}` dropped: invalid los_hours {los}", row.stay_id));
            continue;
        }
        if los < OBSERVATION_HOURS {
            report.excluded_short += 1;
            continue;
        }
        // A death inside the observation window means the stay could not
        // have lasted 24 h; it is excluded together with the short stays.
        if let Some(d) = row.death_offset_h {
            if d <= OBSERVATION_HOURS {
                report.excluded_short += 1;
                continue;
            }
        }
        let record = StayRecord {
            stay_id: row.stay_id.clone(),
            age,
            sex: row.sex.clone(),
            race: row.race.clone(),
            ethnicity: row.ethnicity.clone(),
            comorbidity_codes: row.icd_codes.clone(),
            events: Vec::new(),
            los_hours: los,
            died_inpatient: row.death_offset_h.is_some(),
            time_to_death_hours: row.death_offset_h,
            hospital_id: row.hospital_id.clone(),
            admit_offset: row.admit_dt_offset,
            modality_flags: ModalityFlags {
                has_static: true,
                has_timevariant: true,
                has_notes: false,
            },
        };
        kept.insert(row.stay_id.clone(), record);
    }

    let mut unknown_ids = BTreeSet::new();
    let mut unmapped = BTreeSet::new();
    for mut e in events {
        if !seen.contains(&e.stay_id) {
            report.events_unknown_stay += 1;
            unknown_ids.insert(e.stay_id.clone());
            continue;
        }
        let Some(stay) = kept.get_mut(&e.stay_id) else {
            // belongs to an excluded stay
            continue;
        };
        if !(e.time_offset.is_finite() && e.time_offset >= 0.0) {
            report.events_malformed += 1;
            continue;
        }
        if e.time_offset > OBSERVATION_HOURS {
            report.events_after_window += 1;
            continue;
        }
        match map.resolve(&e.variable) {
            Some(canon) => e.variable = canon.to_string(),
            None => {
                report.events_unmapped += 1;
                unmapped.insert(e.variable.clone());
                continue;
            }
        }
        stay.events.push(e);
    }
    for id in &unknown_ids {
        let msg = format!("events reference unknown stay_id `{id}`; skipped");
        warn!("{msg}");
        report.warnings.push(msg);
    }
    for v in &unmapped {
        report
            .warnings
            .push(format!("variable `{v}` is not in the schema map; events skipped"));
    }

    let stays: Vec<StayRecord> = kept
        .into_values()
        .map(|mut s| {
            s.events.sort_by(|a, b| {
                a.time_offset
                    .total_cmp(&b.time_offset)
                    .then_with(|| a.variable.cmp(&b.variable))
            });
            s
        })
        .collect();
    report.returned = stays.len();
    report.events_retained = stays.iter().map(|s| s.events.len()).sum();
    (stays, report)
}

/// Mark which stays have at least one note inside the observation window.
pub fn attach_note_flags(stays: &mut [StayRecord], notes: &[NoteRow]) {
    let with_notes: BTreeSet<&str> = notes
        .iter()
        .filter(|n| n.note_time_offset_h >= 0.0 && n.note_time_offset_h <= OBSERVATION_HOURS)
        .map(|n| n.stay_id.as_str())
        .collect();
    for s in stays {
        s.modality_flags.has_notes = with_notes.contains(s.stay_id.as_str());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, los: Option<f64>, death: Option<f64>) -> StaticRow {
        StaticRow {
            stay_id: id.into(),
            age: Some(60),
            sex: "F".into(),
            race: "White".into(),
            ethnicity: "Not Hispanic".into(),
            admit_dt_offset: Some(0.0),
            los_hours: los,
            death_offset_h: death,
            hospital_id: None,
            icd_codes: vec![],
        }
    }

    #[test]
    fn short_stays_and_labels() {
        let map = SchemaMap::default_map();
        let statics = vec![
            row("c", Some(20.0), None),
            row("b", Some(30.0), Some(30.0)),
            row("a", Some(20.0), Some(20.0)),
            row("d", None, None),
            row("e", Some(48.0), None),
        ];
        let events = vec![
            RawEvent::numeric("e", "HeartRate", 30.0, 80.0),
            RawEvent::numeric("e", "heartrate", 3.0, 80.0),
            RawEvent::numeric("zz", "HeartRate", 3.0, 80.0),
            RawEvent::numeric("e", "Mystery", 3.0, 1.0),
        ];
        let (stays, rep) = assemble_stays(events, &statics, &map);
        let ids: Vec<_> = stays.iter().map(|s| s.stay_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "e"]);
        assert!(stays[0].died_inpatient);
        assert_eq!(stays[0].time_to_death_hours, Some(30.0));
        assert!(!stays[1].died_inpatient);
        assert_eq!(stays[1].events.len(), 1);
        assert_eq!(stays[1].events[0].variable, "HeartRate");
        assert_eq!(rep.excluded_short, 2);
        assert_eq!(rep.malformed, 1);
        assert_eq!(rep.events_unknown_stay, 1);
        assert_eq!(rep.events_after_window, 1);
        assert_eq!(rep.events_unmapped, 1);
        assert!(rep.is_conserved());
    }
}
