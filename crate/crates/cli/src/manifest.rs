//! Record of completed pipeline stages, used to skip identical reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output path → content hash.
    pub outputs: BTreeMap<String, String>,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

/// What a stage is about to run with.
#[derive(Debug, Clone)]
pub struct StageKey {
    pub name: String,
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl StageKey {
    pub fn new(name: impl Into<String>, inputs: &[&Path], config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), hash_path(p)?)))
            .collect::<Result<_>>()?;
        Ok(StageKey { name: name.into(), inputs, config_hash: hash_config(config), seed })
    }
}

impl PipelineManifest {
    pub fn load(data_dir: &Path) -> Result<Self> {
        let path = data_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(PipelineManifest::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, data_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(data_dir)?;
        let path = data_dir.join(MANIFEST_FILE);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))
    }

    /// True when the stage last ran with the same inputs, configuration and
    /// seed, and its outputs are still as it left them.
    pub fn is_current(&self, key: &StageKey) -> bool {
        let Some(rec) = self.stages.get(&key.name) else { return false };
        rec.inputs == key.inputs
            && rec.config_hash == key.config_hash
            && rec.seed == key.seed
            && rec.outputs.iter().all(|(p, h)| hash_path(Path::new(p)).map(|now| &now == h).unwrap_or(false))
    }

    pub fn record(&mut self, key: StageKey, outputs: &[&Path]) -> Result<()> {
        let outputs = outputs
            .iter()
            .map(|p| Ok((p.display().to_string(), hash_path(p)?)))
            .collect::<Result<_>>()?;
        self.stages.insert(
            key.name,
            StageRecord {
                inputs: key.inputs,
                config_hash: key.config_hash,
                seed: key.seed,
                outputs,
                completed_at: Utc::now(),
            },
        );
        Ok(())
    }
}

pub fn hash_config(config: &impl Serialize) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// Content hash of a file, or of every file under a directory (relative
/// names included, in sorted order).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?);
            h.update([0]);
        }
    } else {
        h.update(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if !path.to_string_lossy().ends_with(".tmp") {
            out.push(path);
        }
    }
    Ok(())
}
