//! Run manifests: every command writes one next to its outputs, carrying a
//! resolved config snapshot, content digests of its inputs, and the artifact
//! list — enough to re-run the command identically and to chain pipeline
//! stages by digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    /// "ok", "failed", or "resolved" (dry runs).
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Content hashes of the command's input files.
    pub inputs: BTreeMap<String, String>,
    /// Digests of upstream stage outputs this stage consumed.
    pub upstream: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> RunManifest {
        RunManifest {
            version: 1,
            command: command.to_string(),
            status: "ok".to_string(),
            error: None,
            seed,
            config,
            inputs: BTreeMap::new(),
            upstream: BTreeMap::new(),
            artifacts: Vec::new(),
            started_unix: now_unix(),
            finished_unix: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_upstream(&mut self, path: &Path) -> Result<()> {
        self.upstream.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    /// Finish and write the manifest into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now_unix();
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(&self).context("serialize manifest")?;
        body.push('\n');
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn fail(mut self, error: &str) -> RunManifest {
        self.status = "failed".to_string();
        self.error = Some(error.to_string());
        self
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_hashes_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.txt");
        fs::write(&input, "stable bytes").unwrap();
        let mut manifest =
            RunManifest::start("stats", serde_json::json!({"k": 1}), 42);
        manifest.add_input(&input).unwrap();
        manifest.add_artifact(&dir.path().join("out.json"));
        let path = manifest.write(dir.path()).unwrap();
        let back: RunManifest =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.command, "stats");
        assert_eq!(back.status, "ok");
        assert_eq!(back.inputs.len(), 1);
        // sha256 of "stable bytes" is stable across runs
        let digest = back.inputs.values().next().unwrap().clone();
        assert_eq!(digest, sha256_file(&input).unwrap());
        assert_eq!(digest.len(), 64);
    }
}
