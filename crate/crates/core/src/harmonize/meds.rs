use regex::Regex;
use serde::Deserialize;

use crate::error::Result;
use crate::ingest::{RawEvent, OBSERVATION_HOURS};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/med_lexicon.toml");

#[derive(Debug, Clone, Deserialize)]
struct LexiconDoc {
    vasopressor: Vec<String>,
    antibiotic: Vec<String>,
    #[serde(default)]
    antibiotic_codes: Vec<String>,
    #[serde(default)]
    excluded_routes: Vec<String>,
    #[serde(default)]
    excluded_terms: Vec<String>,
}

/// Case-insensitive substring lexicon for medication flags.
#[derive(Debug, Clone)]
pub struct MedLexicon {
    vasopressor: Vec<String>,
    antibiotic: Vec<String>,
    antibiotic_codes: Vec<String>,
    excluded_routes: Vec<String>,
    excluded_terms: Vec<String>,
    route_re: Regex,
}

impl MedLexicon {
    pub fn parse(doc: &str) -> Result<Self> {
        let d: LexiconDoc = toml::from_str(doc)?;
        let lower = |v: Vec<String>| v.into_iter().map(|s| s.to_lowercase()).collect::<Vec<_>>();
        Ok(MedLexicon {
            vasopressor: lower(d.vasopressor),
            antibiotic: lower(d.antibiotic),
            antibiotic_codes: d.antibiotic_codes,
            excluded_routes: d.excluded_routes.into_iter().map(|s| s.to_uppercase()).collect(),
            excluded_terms: lower(d.excluded_terms),
            route_re: Regex::new(r"(?i)\broute\b[\s=:]*([a-z]+)").expect("static regex"),
        })
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn is_vasopressor(&self, text: &str) -> bool {
        let t = text.to_lowercase();
        self.vasopressor.iter().any(|s| t.contains(s.as_str()))
    }

    fn route(&self, text: &str) -> Option<String> {
        self.route_re
            .captures(text)
            .map(|c| c[1].to_uppercase())
    }

    fn excluded_route(&self, text: &str) -> bool {
        if let Some(route) = self.route(text) {
            if self.excluded_routes.contains(&route) {
                return true;
            }
        }
        let lower = text.to_lowercase();
        lower
            .split(|c: char| !c.is_alphanumeric())
            .any(|w| self.excluded_terms.iter().any(|t| t == w))
    }

    pub fn is_antibiotic(&self, text: &str) -> bool {
        if self.excluded_route(text) {
            return false;
        }
        let lower = text.to_lowercase();
        if self.antibiotic.iter().any(|s| lower.contains(s.as_str())) {
            return true;
        }
        text.split(|c: char| !c.is_alphanumeric())
            .any(|tok| self.antibiotic_codes.iter().any(|c| c == tok))
    }
}

/// Hourly binary flags derived from medication administrations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedFlags {
    pub vasopressor: [u8; 24],
    pub antibiotic: [u8; 24],
}

/// Flag each hour in which a vasopressor or (non eye/ear) antibiotic was given.
pub fn extract_med_flags(med_rows: &[RawEvent], lexicon: &MedLexicon) -> MedFlags {
    let mut flags = MedFlags {
        vasopressor: [0; 24],
        antibiotic: [0; 24],
    };
    for e in med_rows {
        let Some(text) = e.as_text() else { continue };
        if !(0.0..OBSERVATION_HOURS).contains(&e.time_offset) {
            continue;
        }
        let h = e.time_offset.floor() as usize;
        if lexicon.is_vasopressor(text) {
            flags.vasopressor[h] = 1;
        }
        if lexicon.is_antibiotic(text) {
            flags.antibiotic[h] = 1;
        }
    }
    flags
}
