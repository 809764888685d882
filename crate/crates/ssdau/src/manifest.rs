//! Run manifests: what ran, on what, and what it produced.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::AppResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: Status,
    pub counts: BTreeMap<String, usize>,
    pub wall_ms: f64,
    /// Artifact file name → SHA-256.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageRecord {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Ok,
            counts: BTreeMap::new(),
            wall_ms: 0.0,
            artifacts: BTreeMap::new(),
            error: None,
        }
    }

    pub fn count(&mut self, key: &str, n: usize) -> &mut Self {
        self.counts.insert(key.into(), n);
        self
    }

    pub fn artifact(&mut self, path: &Path) -> AppResult<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.artifacts.insert(name, crate::io::sha256_file(path)?);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// The configuration exactly as run, defaults filled in.
    pub config: RunConfig,
    pub config_hash: String,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    /// Hash over config, inputs, stage counts and artifact hashes; wall
    /// times are excluded so reruns agree.
    pub run_digest: String,
}

/// SHA-256 of the serialized config with `output_dir` and `threads`
/// cleared, since neither may change results.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output_dir.clear();
    c.threads = 0;
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            config_hash: config_hash(config),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
            status: Status::Ok,
            failed_stage: None,
            run_digest: String::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> AppResult<()> {
        self.inputs.insert(path.display().to_string(), crate::io::sha256_file(path)?);
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every artifact hash of the run, by file name.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.artifacts.clone()).collect()
    }

    pub fn compute_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config_hash.as_bytes());
        for (path, hash) in &self.inputs {
            h.update(path.as_bytes());
            h.update(hash.as_bytes());
        }
        for s in &self.stages {
            h.update(s.name.as_bytes());
            h.update(serde_json::to_vec(&s.status).expect("status serializes"));
            h.update(serde_json::to_vec(&s.counts).expect("counts serialize"));
            h.update(serde_json::to_vec(&s.artifacts).expect("hashes serialize"));
        }
        hex::encode(h.finalize())
    }

    pub fn seal(&mut self) {
        self.run_digest = self.compute_digest();
    }
}
