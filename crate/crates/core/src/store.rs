//! On-disk model bank: `manifest.json`, `encoder.json`, `config.json` and
//! one `models/<method>__<arm>.json` per entry.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{FeatureEncoder, TreatmentArm};
use crate::error::{Error, Result};
use crate::learners::{Method, MODEL_FORMAT_VERSION};
use crate::tae_regression::{BankConfig, BankEntry, ModelBank};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MODELS_DIR: &str = "models";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub method: Method,
    pub arm: TreatmentArm,
    pub file: String,
    pub r2: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub version: String,
    pub methods: Vec<Method>,
    pub arms: Vec<TreatmentArm>,
    pub entries: Vec<ManifestEntry>,
    /// Hex SHA-256 of the canonical JSON training configuration.
    pub config_digest: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl BankManifest {
    pub fn r2(&self, method: Method, arm: TreatmentArm) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.arm == arm)
            .map(|e| e.r2)
    }
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    format_version: String,
    entry: BankEntry,
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    format_version: String,
    encoder: FeatureEncoder,
}

pub fn config_digest(config: &BankConfig) -> Result<String> {
    // serde_json::Value keeps object keys sorted, so this is canonical.
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    let hash = Sha256::digest(canonical.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

fn entry_file(method: Method, arm: TreatmentArm) -> String {
    format!("{}__{}.json", method.label(), arm.label().to_ascii_lowercase())
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_version(found: &str) -> Result<()> {
    if found != MODEL_FORMAT_VERSION {
        return Err(Error::IncompatibleVersion {
            found: found.to_string(),
            expected: MODEL_FORMAT_VERSION.into(),
        });
    }
    Ok(())
}

/// Writes the bank under `dir`, creating it if needed.
pub fn save_bank(bank: &ModelBank, config: &BankConfig, dir: impl AsRef<Path>) -> Result<BankManifest> {
    bank.validate()?;
    let dir = dir.as_ref();
    let models = dir.join(MODELS_DIR);
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;

    let mut entries = Vec::with_capacity(bank.entries.len());
    for e in &bank.entries {
        let file = entry_file(e.method, e.arm);
        let doc = EntryFile {
            format_version: MODEL_FORMAT_VERSION.into(),
            entry: e.clone(),
        };
        write(&models.join(&file), &serde_json::to_string(&doc)?)?;
        entries.push(ManifestEntry {
            method: e.method,
            arm: e.arm,
            file: format!("{MODELS_DIR}/{file}"),
            r2: e.r2,
            n_train: e.n_train,
            n_test: e.n_test,
        });
    }
    let enc = EncoderFile {
        format_version: MODEL_FORMAT_VERSION.into(),
        encoder: bank.encoder.clone(),
    };
    write(&dir.join(ENCODER_FILE), &serde_json::to_string(&enc)?)?;
    write(&dir.join(CONFIG_FILE), &serde_json::to_string_pretty(config)?)?;

    let manifest = BankManifest {
        version: MODEL_FORMAT_VERSION.into(),
        methods: bank.methods.clone(),
        arms: bank.arms.clone(),
        entries,
        config_digest: config_digest(config)?,
        created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    write(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<BankManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let body = read(&path)?;
    let raw: serde_json::Value = serde_json::from_str(&body).map_err(|e| Error::CorruptEntry {
        entry: MANIFEST_FILE.into(),
        message: e.to_string(),
    })?;
    if let Some(v) = raw.get("version").and_then(|v| v.as_str()) {
        check_version(v)?;
    }
    serde_json::from_value(raw).map_err(|e| Error::CorruptEntry {
        entry: MANIFEST_FILE.into(),
        message: e.to_string(),
    })
}

pub fn load_bank_config(dir: impl AsRef<Path>) -> Result<BankConfig> {
    let path = dir.as_ref().join(CONFIG_FILE);
    serde_json::from_str(&read(&path)?).map_err(|e| Error::CorruptEntry {
        entry: CONFIG_FILE.into(),
        message: e.to_string(),
    })
}

/// Reads a bank written by [`save_bank`]. Any unreadable or inconsistent
/// file is reported by name.
pub fn load_bank(dir: impl AsRef<Path>) -> Result<(ModelBank, BankManifest)> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;

    let corrupt = |entry: &str, message: String| Error::CorruptEntry {
        entry: entry.to_string(),
        message,
    };
    let enc_body = read(&dir.join(ENCODER_FILE))?;
    let enc: EncoderFile = serde_json::from_str(&enc_body).map_err(|e| corrupt(ENCODER_FILE, e.to_string()))?;
    check_version(&enc.format_version)?;

    let mut entries = Vec::with_capacity(manifest.entries.len());
    for m in &manifest.entries {
        let path: PathBuf = dir.join(&m.file);
        let body = read(&path)?;
        let doc: EntryFile = serde_json::from_str(&body).map_err(|e| corrupt(&m.file, e.to_string()))?;
        check_version(&doc.format_version)?;
        let e = doc.entry;
        if e.method != m.method || e.arm != m.arm {
            return Err(corrupt(
                &m.file,
                format!(
                    "holds {} / {}, manifest expects {} / {}",
                    e.method, e.arm, m.method, m.arm
                ),
            ));
        }
        if e.r2.to_bits() != m.r2.to_bits() {
            return Err(corrupt(&m.file, format!("R² {} differs from manifest {}", e.r2, m.r2)));
        }
        entries.push(e);
    }
    let bank = ModelBank {
        methods: manifest.methods.clone(),
        arms: manifest.arms.clone(),
        encoder: enc.encoder,
        entries,
    };
    bank.validate()?;
    Ok((bank, manifest))
}
