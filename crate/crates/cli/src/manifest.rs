use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::sha256_hex;

/// Provenance record written next to every command's primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    /// SHA-256 of each output file.
    pub output_sha256: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub details: serde_json::Value,
    pub started_at: String,
    pub wall_seconds: f64,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: serde_json::Value, config_hash: String, seed: Option<u64>) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                output_sha256: BTreeMap::new(),
                config,
                details: serde_json::Value::Null,
                started_at: chrono::Utc::now().to_rfc3339(),
                wall_seconds: 0.0,
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.manifest.inputs.insert(role.to_string(), path.display().to_string());
    }

    /// Records an output that has already been written.
    pub fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("re-reading {}", path.display()))?;
        self.manifest.outputs.insert(role.to_string(), path.display().to_string());
        self.manifest.output_sha256.insert(role.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn details(&mut self, details: serde_json::Value) {
        self.manifest.details = details;
    }

    pub fn write(mut self, path: &Path) -> Result<PathBuf> {
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path.to_path_buf())
    }
}

/// `dir/name.manifest.json` for a primary output `dir/name.ext`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}
