//! Run manifests: a per-run record of the resolved configuration, seeds,
//! and content digests of every declared input and output file.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Snapshot of the fully resolved configuration.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: u64,
    pub finished_at: u64,
    /// Path -> sha256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Collects digests while a command runs, then writes `manifest.json` into
/// the output directory.
pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: now_unix(),
                finished_at: 0,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Finalizes timestamps and writes the manifest next to the outputs.
    pub fn write(mut self, out_dir: &Path) -> std::io::Result<RunManifest> {
        self.manifest.finished_at = now_unix();
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}
