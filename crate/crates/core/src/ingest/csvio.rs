//! Delimited-text readers and writers for `events.csv`, `statics.csv` and `notes.csv`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventValue, RawEvent, StaticRow};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct EventCsvRow {
    stay_id: String,
    variable: String,
    time_offset_h: String,
    value_numeric: String,
    value_text: String,
    unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRow {
    pub stay_id: String,
    pub note_time_offset_h: f64,
    pub text: String,
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn write_events<W: Write>(out: W, events: &[RawEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        let (num, text) = match &e.value {
            EventValue::Numeric(v) => (fmt_num(*v), String::new()),
            EventValue::Text(s) => (String::new(), s.clone()),
        };
        w.serialize(EventCsvRow {
            stay_id: e.stay_id.clone(),
            variable: e.variable.clone(),
            time_offset_h: fmt_num(e.time_offset),
            value_numeric: num,
            value_text: text,
            unit: e.unit.clone().unwrap_or_default(),
        })
        .map_err(|e| Error::csv("events.csv", e))?;
    }
    w.flush().map_err(|e| Error::io("events.csv", e))?;
    Ok(())
}

/// Parse events. Rows violating the event invariants are returned as
/// diagnostics instead of aborting the read.
pub fn read_events<R: Read>(input: R, origin: &Path) -> Result<(Vec<RawEvent>, Vec<String>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut events = Vec::new();
    let mut malformed = Vec::new();
    for (line, row) in rdr.deserialize::<EventCsvRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(origin, e))?;
        match parse_event(row) {
            Ok(e) => events.push(e),
            Err(reason) => malformed.push(format!("row {}: {reason}", line + 2)),
        }
    }
    Ok((events, malformed))
}

fn parse_event(row: EventCsvRow) -> std::result::Result<RawEvent, String> {
    let t: f64 = row
        .time_offset_h
        .trim()
        .parse()
        .map_err(|_| format!("bad time_offset_h `{}`", row.time_offset_h))?;
    if !t.is_finite() || t < 0.0 {
        return Err(format!("time_offset_h {t} outside [0, inf)"));
    }
    let num = row.value_numeric.trim();
    let text = row.value_text.trim();
    let value = match (num.is_empty(), text.is_empty()) {
        (false, true) => {
            let v: f64 = num
                .parse()
                .map_err(|_| format!("bad value_numeric `{num}`"))?;
            if !v.is_finite() {
                return Err("non-finite value_numeric".to_string());
            }
            EventValue::Numeric(v)
        }
        (true, false) => EventValue::Text(text.to_string()),
        _ => return Err("exactly one of value_numeric/value_text must be present".to_string()),
    };
    let unit = row.unit.trim();
    Ok(RawEvent {
        stay_id: row.stay_id.trim().to_string(),
        variable: row.variable.trim().to_string(),
        time_offset: t,
        value,
        unit: (!unit.is_empty()).then(|| unit.to_string()),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct StaticCsvRow {
    stay_id: String,
    age: String,
    sex: String,
    race: String,
    ethnicity: String,
    admit_dt_offset: String,
    los_hours: String,
    death_offset_h: String,
    hospital_id: String,
    icd_codes: String,
}

fn opt_f64(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| format!("bad number `{s}`"))
    }
}

pub fn write_statics<W: Write>(out: W, rows: &[StaticRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        w.serialize(StaticCsvRow {
            stay_id: r.stay_id.clone(),
            age: r.age.map(|a| a.to_string()).unwrap_or_default(),
            sex: r.sex.clone(),
            race: r.race.clone(),
            ethnicity: r.ethnicity.clone(),
            admit_dt_offset: opt(r.admit_dt_offset),
            los_hours: opt(r.los_hours),
            death_offset_h: opt(r.death_offset_h),
            hospital_id: r.hospital_id.clone().unwrap_or_default(),
            icd_codes: r.icd_codes.join(";"),
        })
        .map_err(|e| Error::csv("statics.csv", e))?;
    }
    w.flush().map_err(|e| Error::io("statics.csv", e))?;
    Ok(())
}

/// Parse statics. Unparseable numeric cells become diagnostics and the row's
/// affected field is left empty (assembly then decides whether to drop it).
pub fn read_statics<R: Read>(input: R, origin: &Path) -> Result<(Vec<StaticRow>, Vec<String>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for (line, row) in rdr.deserialize::<StaticCsvRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(origin, e))?;
        let mut note = |field: &str, r: std::result::Result<Option<f64>, String>| match r {
            Ok(v) => v,
            Err(msg) => {
                problems.push(format!("row {} ({}): {field}: {msg}", line + 2, row.stay_id));
                None
            }
        };
        let age = note("age", opt_f64(&row.age));
        let admit = note("admit_dt_offset", opt_f64(&row.admit_dt_offset));
        let los = note("los_hours", opt_f64(&row.los_hours));
        let death = note("death_offset_h", opt_f64(&row.death_offset_h));
        let hospital = row.hospital_id.trim();
        rows.push(StaticRow {
            stay_id: row.stay_id.trim().to_string(),
            age: age.filter(|a| *a >= 0.0).map(|a| a.round() as u32),
            sex: row.sex.trim().to_string(),
            race: row.race.trim().to_string(),
            ethnicity: row.ethnicity.trim().to_string(),
            admit_dt_offset: admit,
            los_hours: los,
            death_offset_h: death,
            hospital_id: (!hospital.is_empty()).then(|| hospital.to_string()),
            icd_codes: row
                .icd_codes
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok((rows, problems))
}

pub fn write_notes<W: Write>(out: W, notes: &[NoteRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(out);
    for n in notes {
        w.serialize(n).map_err(|e| Error::csv("notes.csv", e))?;
    }
    w.flush().map_err(|e| Error::io("notes.csv", e))?;
    Ok(())
}

pub fn read_notes<R: Read>(input: R, origin: &Path) -> Result<Vec<NoteRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<NoteRow>()
        .map(|r| r.map_err(|e| Error::csv(origin, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_and_malformed_rows() {
        let events = vec![
            RawEvent::numeric("s1", "HeartRate", 0.5, 88.0).with_unit("bpm"),
            RawEvent::text("s1", "VentMode", 1.0, "AC"),
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("stay_id,variable,time_offset_h,value_numeric,value_text,unit\n"));
        let (back, bad) = read_events(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, events);
        assert!(bad.is_empty());

        let raw = "stay_id,variable,time_offset_h,value_numeric,value_text,unit\n\
                   s1,HR,-1,80,,\ns1,HR,1,80,x,\ns1,HR,1,,,\ns1,HR,2,81,,\n";
        let (ok, bad) = read_events(raw.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(bad.len(), 3);
    }

    #[test]
    fn statics_parse_optional_fields() {
        let raw = "stay_id,age,sex,race,ethnicity,admit_dt_offset,los_hours,death_offset_h,hospital_id,icd_codes\n\
                   a,70,F,White,Not Hispanic,0,30,,H01,I50.9;E11.9\n\
                   b,55,M,Black,Hispanic,,,,,\n";
        let (rows, problems) = read_statics(raw.as_bytes(), Path::new("mem")).unwrap();
        assert!(problems.is_empty());
        assert_eq!(rows[0].icd_codes, vec!["I50.9", "E11.9"]);
        assert_eq!(rows[0].los_hours, Some(30.0));
        assert_eq!(rows[1].los_hours, None);
        assert_eq!(rows[1].hospital_id, None);
    }
}
