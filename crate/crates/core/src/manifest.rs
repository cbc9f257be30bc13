//! Sidecar manifests tying every artifact to the exact inputs, configuration
//! and seed that produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub sha256: String,
    pub bytes: u64,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Inputs by logical name.
    pub inputs: BTreeMap<String, InputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a configuration section's canonical JSON form.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    sha256_hex(&json)
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(MANIFEST_SUFFIX);
    path.with_file_name(name)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn mismatch(path: &Path, reason: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// A verified input: its manifest (if it has one) and current hash.
#[derive(Debug, Clone)]
pub struct VerifiedInput {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
    pub manifest: Option<Manifest>,
}

/// Check that `path` still matches its sidecar manifest.
pub fn verify(name: &str, path: &Path) -> Result<VerifiedInput> {
    let sc = sidecar(path);
    if !sc.exists() {
        return Err(mismatch(path, format!("no manifest at {}; refusing an unmanifested input", sc.display())));
    }
    let text = fs::read_to_string(&sc).map_err(|e| Error::io(&sc, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json { path: sc.clone(), source: e })?;
    let sha256 = sha256_file(path)?;
    if sha256 != manifest.sha256 {
        return Err(mismatch(
            path,
            format!(
                "content hash {} differs from the recorded {}; the file changed after `{}` wrote it",
                &sha256[..12],
                &manifest.sha256[..12.min(manifest.sha256.len())],
                manifest.command
            ),
        ));
    }
    Ok(VerifiedInput {
        name: name.to_string(),
        path: path.to_path_buf(),
        sha256,
        manifest: Some(manifest),
    })
}

/// Hash an external input that carries no manifest of its own.
pub fn external(name: &str, path: &Path) -> Result<VerifiedInput> {
    Ok(VerifiedInput {
        name: name.to_string(),
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
        manifest: None,
    })
}

/// Refuse inputs built from a different version of another input of the same command.
pub fn check_lineage(inputs: &[VerifiedInput]) -> Result<()> {
    let current: BTreeMap<&str, &VerifiedInput> = inputs.iter().map(|i| (i.name.as_str(), i)).collect();
    for input in inputs {
        let Some(m) = &input.manifest else { continue };
        for (name, rec) in &m.inputs {
            if let Some(now) = current.get(name.as_str()) {
                if now.sha256 != rec.sha256 {
                    return Err(mismatch(
                        &input.path,
                        format!(
                            "built from a different `{name}` ({}) than the one supplied ({}); it is stale, rerun `{}`",
                            &rec.sha256[..12.min(rec.sha256.len())],
                            &now.sha256[..12],
                            m.command
                        ),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// What a command records about itself in each output's manifest.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, InputRecord>,
}

impl Provenance {
    pub fn new(command: &str, version: &str, seed: u64, config_sha256: String, inputs: &[VerifiedInput]) -> Self {
        Provenance {
            command: command.to_string(),
            version: version.to_string(),
            seed,
            config_sha256,
            inputs: inputs
                .iter()
                .map(|i| {
                    (
                        i.name.clone(),
                        InputRecord {
                            file: file_name(&i.path),
                            sha256: i.sha256.clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Write `bytes` to `path` and its manifest next to it.
    pub fn write(&self, path: &Path, bytes: &[u8]) -> Result<Manifest> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let manifest = Manifest {
            artifact: file_name(path),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            command: self.command.clone(),
            version: self.version.clone(),
            seed: self.seed,
            config_sha256: self.config_sha256.clone(),
            inputs: self.inputs.clone(),
        };
        let sc = sidecar(path);
        let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Json { path: sc.clone(), source: e })?;
        json.push(b'\n');
        fs::write(&sc, json).map_err(|e| Error::io(&sc, e))?;
        Ok(manifest)
    }
}
