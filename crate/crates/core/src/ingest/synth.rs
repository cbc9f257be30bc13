//! Synthetic cohort generator.
//!
//! Mortality is driven by a latent logistic model over six planted canonical
//! variables; each stay's events are then rendered from its latent state with
//! realistic sampling cadences, unit variety, aliases and a few outliers, so the
//! whole harmonization path is exercised.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NoteRow, RawEvent, StaticRow};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

/// Planted predictors, in the order used by `signal_spec`.
pub const PLANTED_FEATURES: [&str; 6] = ["lactate", "gcs", "age", "urine_output", "bun", "shock_index"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_stays: usize,
    pub mortality_rate: f64,
    pub seed: u64,
    /// Logistic coefficient per planted feature, on that feature's
    /// standardized latent scale.
    pub signal_spec: BTreeMap<String, f64>,
    pub hospital_count: usize,
    /// Fraction of qualifying stays that get clinical notes.
    pub notes_fraction: f64,
    /// Extra sub-24 h stays (relative to `n_stays`) emitted to exercise exclusion.
    pub short_stay_fraction: f64,
    /// Cadence of the high-frequency vital signs, minutes.
    pub vitals_interval_min: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_stays: 1000,
            mortality_rate: 0.06,
            seed: 7,
            signal_spec: default_signal_spec(),
            hospital_count: 8,
            notes_fraction: 0.6,
            short_stay_fraction: 0.02,
            vitals_interval_min: 15.0,
        }
    }
}

pub fn default_signal_spec() -> BTreeMap<String, f64> {
    [
        ("lactate", 1.7),
        ("gcs", -1.6),
        ("age", 2.0),
        ("urine_output", -1.3),
        ("bun", 1.2),
        ("shock_index", 1.4),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stays == 0 {
            return Err(Error::Config("n_stays must be > 0".into()));
        }
        if !(self.mortality_rate > 0.0 && self.mortality_rate < 1.0) {
            return Err(Error::Config("mortality_rate must lie in (0, 1)".into()));
        }
        if self.hospital_count == 0 {
            return Err(Error::Config("hospital_count must be > 0".into()));
        }
        for (k, v) in &self.signal_spec {
            if !PLANTED_FEATURES.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "signal_spec names unknown feature `{k}` (known: {})",
                    PLANTED_FEATURES.join(", ")
                )));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("signal_spec coefficient for `{k}` is not finite")));
            }
        }
        if !(0.0..=1.0).contains(&self.notes_fraction) || !(0.0..=1.0).contains(&self.short_stay_fraction) {
            return Err(Error::Config("fractions must lie in [0, 1]".into()));
        }
        if !(self.vitals_interval_min > 0.0 && self.vitals_interval_min <= 60.0) {
            return Err(Error::Config("vitals_interval_min must lie in (0, 60]".into()));
        }
        Ok(())
    }

    fn coef(&self, name: &str) -> f64 {
        self.signal_spec.get(name).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub events: Vec<RawEvent>,
    pub statics: Vec<StaticRow>,
    pub notes: Vec<NoteRow>,
    /// Linear predictor of the planted model, per qualifying stay id.
    pub linear_predictor: BTreeMap<String, f64>,
}

struct Latent {
    z: [f64; 6],
    lp: f64,
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn r3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn pick<'a>(rng: &mut Rng, items: &[(&'a str, f64)]) -> &'a str {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (name, p) in items {
        acc += p;
        if u < acc {
            return name;
        }
    }
    items.last().map(|(n, _)| *n).unwrap_or("")
}

const RACES: [(&str, f64); 5] = [
    ("White", 0.65),
    ("Black", 0.12),
    ("Asian", 0.05),
    ("Other", 0.10),
    ("Unknown", 0.08),
];

const ICD_POOL: [&str; 20] = [
    "I50.9", "I10", "I48.91", "E11.9", "E11.65", "K70.30", "N18.3", "J44.9", "C78.00", "C34.90",
    "F10.20", "E66.9", "D68.9", "E87.1", "I11.0", "428.0", "401.9", "250.00", "496", "585.9",
];

/// Generate a synthetic cohort. Deterministic in `cfg.seed`; exactly
/// `ceil(n_stays * mortality_rate)` qualifying stays die.
pub fn generate_synthetic_cohort(cfg: &GenConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let n = cfg.n_stays;
    let mut rng = rng_for(cfg.seed, "synth/latent");

    let coefs: Vec<f64> = PLANTED_FEATURES.iter().map(|f| cfg.coef(f)).collect();
    let latents: Vec<Latent> = (0..n)
        .map(|_| {
            let mut z = [0.0; 6];
            for v in z.iter_mut() {
                *v = normal(&mut rng);
            }
            let lp = z.iter().zip(&coefs).map(|(a, b)| a * b).sum();
            Latent { z, lp }
        })
        .collect();

    // Latent-threshold draw with logistic noise, keeping the top k as deaths.
    let k = ((n as f64) * cfg.mortality_rate).ceil() as usize;
    let mut outcome_rng = rng_for(cfg.seed, "synth/outcome");
    let mut utility: Vec<(f64, usize)> = latents
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let u: f64 = outcome_rng.random_range(1e-12..1.0 - 1e-12);
            (l.lp + (u / (1.0 - u)).ln(), i)
        })
        .collect();
    utility.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut died = vec![false; n];
    for &(_, i) in utility.iter().take(k) {
        died[i] = true;
    }

    let mut events = Vec::new();
    let mut statics = Vec::new();
    let mut notes = Vec::new();
    let mut linear_predictor = BTreeMap::new();
    let mut stay_rng = rng_for(cfg.seed, "synth/stays");
    for (i, lat) in latents.iter().enumerate() {
        let id = format!("S{:06}", i + 1);
        linear_predictor.insert(id.clone(), lat.lp);
        render_stay(cfg, &id, lat, died[i], &mut stay_rng, &mut events, &mut statics, &mut notes);
    }

    let n_short = ((n as f64) * cfg.short_stay_fraction).round() as usize;
    for j in 0..n_short {
        let id = format!("S{:06}", n + j + 1);
        let los = stay_rng.random_range(4.0..23.5);
        let death = stay_rng.random_bool(0.3).then(|| r3(los));
        statics.push(StaticRow {
            stay_id: id.clone(),
            age: Some(stay_rng.random_range(20..90)),
            sex: if stay_rng.random_bool(0.5) { "M" } else { "F" }.into(),
            race: pick(&mut stay_rng, &RACES).into(),
            ethnicity: "Not Hispanic".into(),
            admit_dt_offset: Some(r3(stay_rng.random_range(0.0..8760.0))),
            los_hours: Some(r3(los)),
            death_offset_h: death,
            hospital_id: Some(format!("H{:02}", 1 + stay_rng.random_range(0..cfg.hospital_count))),
            icd_codes: vec![],
        });
        let mut t = 0.0;
        while t < los {
            events.push(RawEvent::numeric(&id, "HeartRate", r3(t), r3(90.0 + 10.0 * normal(&mut stay_rng))).with_unit("bpm"));
            t += 1.0;
        }
    }

    Ok(SyntheticCohort {
        events,
        statics,
        notes,
        linear_predictor,
    })
}

#[allow(clippy::too_many_arguments)]
fn render_stay(
    cfg: &GenConfig,
    id: &str,
    lat: &Latent,
    died: bool,
    rng: &mut Rng,
    events: &mut Vec<RawEvent>,
    statics: &mut Vec<StaticRow>,
    notes: &mut Vec<NoteRow>,
) {
    let [z_lac, z_gcs, z_age, z_uo, z_bun, z_si] = lat.z;

    // --- statics -------------------------------------------------------------
    let age = (63.0 + 16.0 * z_age).round().clamp(18.0, 98.0) as u32;
    let ttd = died.then(|| r3(24.0 + (60f64.ln() + 0.9 * normal(rng)).exp().min(1400.0)));
    let los = match ttd {
        Some(d) if rng.random_bool(0.8) => d,
        Some(d) => r3(24.0 + (d - 24.0) * rng.random_range(0.3..1.0)),
        None => r3(24.0 + (40f64.ln() + 0.7 * normal(rng)).exp()),
    };
    let n_codes = rng.random_range(0..5);
    let mut codes: Vec<String> = ICD_POOL.choose_multiple(rng, n_codes).map(|c| c.to_string()).collect();
    codes.sort();
    statics.push(StaticRow {
        stay_id: id.to_string(),
        age: Some(age),
        sex: if rng.random_bool(0.56) { "M" } else { "F" }.into(),
        race: pick(rng, &RACES).into(),
        ethnicity: if rng.random_bool(0.08) { "Hispanic" } else { "Not Hispanic" }.into(),
        admit_dt_offset: Some(r3(rng.random_range(0.0..8760.0))),
        los_hours: Some(los),
        death_offset_h: ttd,
        hospital_id: Some(format!("H{:02}", 1 + rng.random_range(0..cfg.hospital_count))),
        icd_codes: codes,
    });

    let num = |var: &str, t: f64, v: f64, unit: Option<&str>| {
        let e = RawEvent::numeric(id, var, r3(t), r3(v));
        match unit {
            Some(u) => e.with_unit(u),
            None => e,
        }
    };

    // --- admission attributes ---------------------------------------------------
    events.push(RawEvent::text(
        id,
        "AdmissionType",
        0.0,
        pick(rng, &[("medical", 0.55), ("unscheduled_surgical", 0.25), ("scheduled_surgical", 0.20)]),
    ));
    events.push(num("PreICULOS", 0.0, (1.5 + 1.2 * normal(rng)).exp(), Some("h")));

    // --- high-frequency vitals ----------------------------------------------------
    let si = (0.68 + 0.14 * z_si).clamp(0.35, 1.6);
    let sbp_base = (118.0 + 14.0 * normal(rng)).clamp(75.0, 190.0);
    let hr_base = (si * sbp_base).clamp(40.0, 175.0);
    let rr_base = (17.0 + 2.5 * normal(rng)).clamp(8.0, 35.0);
    let dips = {
        let lambda = 1.0 + 0.8 * normal(rng).abs();
        (lambda + normal(rng)).round().clamp(0.0, 5.0) as usize
    };
    let step_h = cfg.vitals_interval_min / 60.0;
    let phase = rng.random_range(0.0..step_h);
    let n_samples = ((24.0 - phase) / step_h).ceil() as usize;
    let hr_period = rng.random_range(1.5..6.0);
    let mut ar_hr = 0.0;
    let mut ar_rr = 0.0;
    let dip_centers: Vec<f64> = (0..dips).map(|_| rng.random_range(0.5..23.5)).collect();
    let hr_name = if rng.random_bool(0.5) { "heartrate" } else { "HeartRate" };
    let rr_name = if rng.random_bool(0.5) { "resp_rate" } else { "RespRate" };
    for s in 0..n_samples {
        let t = phase + s as f64 * step_h;
        if t >= 24.0 {
            break;
        }
        ar_hr = 0.8 * ar_hr + 2.5 * normal(rng);
        ar_rr = 0.7 * ar_rr + 1.0 * normal(rng);
        let mut hr = hr_base + ar_hr + 3.0 * (2.0 * PI * t / hr_period).sin();
        if rng.random_bool(0.002) {
            hr = 400.0;
        }
        events.push(num(hr_name, t, hr, Some("bpm")));
        events.push(num(rr_name, t, (rr_base + ar_rr).max(4.0), Some("insp/min")));
        let mut spo2 = 97.0 + 1.0 * normal(rng);
        for c in &dip_centers {
            let d = (t - c).abs();
            if d < 0.6 {
                spo2 -= 9.0 * (1.0 - d / 0.6);
            }
        }
        events.push(num("SpO2", t, spo2.clamp(60.0, 100.0), Some("%")));
    }

    // --- hourly hemodynamics and urine ---------------------------------------------
    let uo_mean = (4.3 + 0.55 * z_uo).exp();
    let split_urine = rng.random_bool(0.3);
    for h in 0..24 {
        let t = h as f64 + rng.random_range(0.0..0.9);
        let sbp = sbp_base + 6.0 * normal(rng);
        let dbp = 0.55 * sbp + 4.0 * normal(rng);
        events.push(num("SBP", t, sbp, Some("mmHg")));
        events.push(num("DBP", t, dbp, Some("mmHg")));
        if rng.random_bool(0.75) {
            events.push(num("MAP", t, (sbp + 2.0 * dbp) / 3.0 + 1.5 * normal(rng), Some("mmHg")));
        }
        let uo = uo_mean * (0.35 * normal(rng)).exp();
        if split_urine {
            let f = rng.random_range(0.2..0.8);
            events.push(num("Urine Output-Foley", t, uo * f, Some("mL")));
            events.push(num("URINE CATHETER", t + 0.05, uo * (1.0 - f), Some("mL")));
        } else {
            events.push(num("Urine Output-Foley", t, uo, Some("mL")));
        }
    }

    // --- temperature every 4 h, some stays charted in Fahrenheit ---------------------
    let fahrenheit = rng.random_bool(0.3);
    let temp_base = 37.0 + 0.5 * normal(rng);
    for k in 0..6 {
        let t = 4.0 * k as f64 + rng.random_range(0.0..2.0);
        let c = temp_base + 0.3 * normal(rng);
        if fahrenheit {
            events.push(num("temp", t, c * 9.0 / 5.0 + 32.0, Some("degF")));
        } else {
            events.push(num("Temperature", t, c, Some("degC")));
        }
    }

    // --- neurologic status: totals, components or RASS ---------------------------------
    let gcs = (12.8 + 2.4 * z_gcs).round().clamp(3.0, 15.0);
    let gcs_mode = pick(rng, &[("components", 0.6), ("total", 0.3), ("rass", 0.1)]);
    for k in 0..6 {
        let t = 1.0 + 4.0 * k as f64 + rng.random_range(0.0..1.0);
        match gcs_mode {
            "components" => {
                let (e, v, m) = split_gcs(gcs as u32);
                events.push(num("GCS_Eye", t, e as f64, None));
                events.push(num("GCS_Verbal", t, v as f64, None));
                events.push(num("GCS_Motor", t, m as f64, None));
            }
            "total" => events.push(num("GCS_Total", t, gcs, None)),
            _ => events.push(num("RASS", t, rass_for_gcs(gcs), None)),
        }
    }

    // --- labs every 6 h ------------------------------------------------------------------
    let lac_level = (0.55 + 0.5 * z_lac).exp();
    let bun_level = (3.0 + 0.55 * z_bun).exp();
    let creat_level = (0.0 + 0.4 * normal(rng) + 0.2 * z_bun).exp();
    let na = 139.0 + 4.0 * normal(rng);
    let k_level = 4.1 + 0.5 * normal(rng);
    let hco3 = 24.0 + 3.0 * normal(rng) - 1.0 * z_lac;
    let wbc = (2.2 + 0.4 * normal(rng)).exp();
    let plt = 220.0 * (0.35 * normal(rng)).exp();
    let hb = (10.5 + 1.8 * normal(rng)).clamp(5.0, 17.0);
    let glucose = 130.0 + 35.0 * normal(rng);
    let si_units = rng.random_bool(0.2);
    for k in 0..4 {
        let t = 2.0 + 6.0 * k as f64 + rng.random_range(0.0..2.0);
        let jitter = |rng: &mut Rng, sd: f64| (sd * normal(rng)).exp();
        let lac = lac_level * jitter(rng, 0.12);
        if rng.random_bool(0.1) {
            events.push(num("lactate", t, lac / 0.11101243339253997, Some("mg/dL")));
        } else {
            events.push(num("Lactate", t, lac, Some("mmol/L")));
        }
        let bun = bun_level * jitter(rng, 0.08);
        let creat = creat_level * jitter(rng, 0.06);
        if si_units {
            events.push(num("BUN", t, bun / 2.8, Some("mmol/L")));
            events.push(num("Creatinine", t, creat / 0.011309658448314861, Some("umol/L")));
        } else {
            events.push(num("BUN", t, bun, Some("mg/dL")));
            events.push(num("Creatinine", t, creat, Some("mg/dL")));
        }
        events.push(num("Sodium", t, na + normal(rng), Some("mEq/L")));
        events.push(num("Potassium", t, k_level + 0.15 * normal(rng), Some("mEq/L")));
        events.push(num("Bicarbonate", t, hco3 + normal(rng), Some("mEq/L")));
        events.push(num("WBC", t, wbc * jitter(rng, 0.08), Some("K/uL")));
        events.push(num("Platelets", t, plt * jitter(rng, 0.05), Some("K/uL")));
        events.push(num("Glucose", t, glucose + 15.0 * normal(rng), Some("mg/dL")));
        match rng.random_range(0..3) {
            0 => events.push(num("Hemoglobin", t, hb + 0.2 * normal(rng), Some("g/dL"))),
            1 => events.push(num("Hematocrit", t, 3.0 * hb + 0.6 * normal(rng), Some("%"))),
            _ => {
                events.push(num("Hemoglobin", t, hb + 0.2 * normal(rng), Some("g/dL")));
                events.push(num("Hematocrit", t, 3.0 * hb + 0.6 * normal(rng), Some("%")));
            }
        }
    }
    let bili = (-0.3 + 0.7 * normal(rng)).exp();
    if rng.random_bool(0.5) {
        events.push(num("BilirubinTotal", 3.0, bili, Some("mg/dL")));
    } else {
        events.push(num("BilirubinDirect", 3.0, 0.3 * bili, Some("mg/dL")));
    }

    // --- ventilation and blood gases -------------------------------------------------
    if rng.random_bool(0.35) {
        let mode = pick(rng, &[("AC", 0.7), ("PS", 0.2), ("SIMV", 0.1)]);
        let fio2 = rng.random_range(0.3..0.8);
        let pct = rng.random_bool(0.3);
        for k in 0..6 {
            let t = 4.0 * k as f64 + rng.random_range(0.0..1.0);
            events.push(num("Ventilated", t, 1.0, None));
            events.push(RawEvent::text(id, "VentMode", r3(t), if rng.random_bool(0.85) { mode } else { "PS" }));
            if pct {
                events.push(num("FiO2", t, 100.0 * fio2, Some("%")));
            } else {
                events.push(num("FiO2", t, fio2, Some("fraction")));
            }
        }
        for k in 0..4 {
            let t = 3.0 + 6.0 * k as f64;
            events.push(num("PaO2", t, (95.0 + 25.0 * normal(rng)).clamp(45.0, 400.0), Some("mmHg")));
            events.push(num("PaCO2", t, (40.0 + 5.0 * normal(rng)).clamp(20.0, 90.0), Some("mmHg")));
            events.push(num("pH", t, 7.39 + 0.05 * normal(rng), None));
        }
    }

    // --- medications ---------------------------------------------------------------------
    if z_si > 0.8 && rng.random_bool(0.7) {
        let start = rng.random_range(0.0..12.0f64).floor();
        let rate = rng.random_range(0.05..0.3);
        events.push(RawEvent::text(id, "Medication", start + 0.1, "Norepinephrine 8 mcg/min IV"));
        for h in 0..rng.random_range(2..8) {
            let t = start + h as f64 + 0.2;
            if t < 24.0 {
                events.push(num("NorepinephrineRate", t, rate, Some("mcg/kg/min")));
            }
        }
    }
    if rng.random_bool(0.5) {
        let t = rng.random_range(0.0..20.0);
        let drug = pick(rng, &[("Vancomycin 1 g IV", 0.5), ("Piperacillin-Tazobactam 4.5 g IV", 0.3), ("Cefazolin 2 g IV", 0.2)]);
        events.push(RawEvent::text(id, "Medication", r3(t), drug));
    }
    if rng.random_bool(0.1) {
        let t = rng.random_range(0.0..20.0);
        events.push(RawEvent::text(id, "Medication", r3(t), "Ofloxacin 0.3% ophth soln, route OU"));
    }

    // --- notes ---------------------------------------------------------------------------
    if rng.random_bool(cfg.notes_fraction) {
        let t = r3(rng.random_range(2.0..22.0));
        notes.push(NoteRow {
            stay_id: id.to_string(),
            note_time_offset_h: t,
            text: synth_note(rng, lat.lp),
        });
        if rng.random_bool(0.1) {
            notes.push(NoteRow {
                stay_id: id.to_string(),
                note_time_offset_h: r3(rng.random_range(25.0..40.0)),
                text: synth_note(rng, lat.lp),
            });
        }
    }
}

/// Split a GCS total into eye/verbal/motor components summing to it.
fn split_gcs(total: u32) -> (u32, u32, u32) {
    let motor = (total - 2).min(6);
    let rest = total - motor;
    let verbal = (rest - 1).min(5);
    (rest - verbal, verbal, motor)
}

fn rass_for_gcs(gcs: f64) -> f64 {
    match gcs as u32 {
        15 => 0.0,
        14 => -1.0,
        12..=13 => -2.0,
        9..=11 => -3.0,
        5..=8 => -4.0,
        _ => -5.0,
    }
}

const SEVERE: [&str; 6] = [
    "remains intubated and sedated with escalating vasopressor requirements overnight",
    "hypotensive despite fluid resuscitation with worsening lactic acidosis noted",
    "obtunded and minimally responsive with concern for multiorgan dysfunction",
    "family meeting held to discuss goals of care given poor prognosis",
    "oliguric with rising creatinine and consideration of renal replacement therapy",
    "persistent shock physiology requiring norepinephrine and stress dose steroids",
];

const MILD: [&str; 6] = [
    "alert and oriented ambulating with assistance and tolerating regular diet",
    "hemodynamically stable on room air without supplemental oxygen requirement today",
    "comfortable and conversant with pain well controlled on oral medications",
    "improving clinically with plan for transfer to the floor tomorrow morning",
    "vital signs within normal limits and labs trending toward baseline values",
    "mobilizing well with physical therapy and voiding spontaneously without issue",
];

fn synth_note(rng: &mut Rng, lp: f64) -> String {
    let p_severe = 1.0 / (1.0 + (-(0.8 * lp - 1.0)).exp());
    let sentence = |rng: &mut Rng| {
        let pool = if rng.random_bool(p_severe) { &SEVERE } else { &MILD };
        let s = pool[rng.random_range(0..pool.len())];
        format!("Patient {s}.")
    };
    let mut out = String::new();
    out.push_str("Patient seen by [**First Name**] [**Last Name**] on [**Date**].\n");
    out.push_str(&format!("HISTORY: {} Admitted from the emergency department for further management and monitoring.\n", sentence(rng)));
    out.push_str(&format!("FINDINGS: {} {} Brief note.\n", sentence(rng), sentence(rng)));
    out.push_str("INDICATION:   \n");
    out.push_str(&format!("IMPRESSION: {} Will continue current plan of care and reassess the patient later today.\n", sentence(rng)));
    out.push_str("Electronically signed by Dr. [**Doctor**] on [**Date**].");
    out
}
