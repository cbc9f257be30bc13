use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMORBIDITY_MAP: &str = include_str!("../../data/comorbidity_map.toml");
pub const N_CONDITIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    #[serde(default)]
    pub icd10: Vec<String>,
    #[serde(default)]
    pub icd9: Vec<String>,
}

/// Thirty named conditions, each a set of ICD-9/ICD-10 code prefixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComorbidityMap {
    #[serde(rename = "condition")]
    pub conditions: Vec<Condition>,
}

fn normalize_code(code: &str) -> String {
    code.trim()
        .chars()
        .filter(|c| *c != '.')
        .flat_map(char::to_uppercase)
        .collect()
}

impl ComorbidityMap {
    pub fn parse(doc: &str) -> Result<Self> {
        let mut map: ComorbidityMap = toml::from_str(doc)?;
        if map.conditions.len() != N_CONDITIONS {
            return Err(Error::Config(format!(
                "comorbidity map must define exactly {N_CONDITIONS} conditions, found {}",
                map.conditions.len()
            )));
        }
        for c in &mut map.conditions {
            if c.icd10.is_empty() && c.icd9.is_empty() {
                return Err(Error::Config(format!("condition `{}` has no code prefixes", c.name)));
            }
            for p in c.icd10.iter_mut().chain(c.icd9.iter_mut()) {
                *p = normalize_code(p);
            }
        }
        Ok(map)
    }

    pub fn default_map() -> Self {
        Self::parse(DEFAULT_COMORBIDITY_MAP).expect("bundled comorbidity map is valid")
    }

    pub fn names(&self) -> Vec<&str> {
        self.conditions.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.conditions.iter().position(|c| c.name == name)
    }
}

/// Binary presence vector (length 30) from a stay's diagnostic codes.
/// Bit `c` is set when any code starts with any prefix of condition `c`.
pub fn encode_comorbidities<S: AsRef<str>>(codes: &[S], map: &ComorbidityMap) -> Vec<u8> {
    let codes: Vec<String> = codes.iter().map(|c| normalize_code(c.as_ref())).collect();
    map.conditions
        .iter()
        .map(|cond| {
            let hit = codes.iter().any(|code| {
                cond.icd10
                    .iter()
                    .chain(cond.icd9.iter())
                    .any(|p| code.starts_with(p.as_str()))
            });
            hit as u8
        })
        .collect()
}
