//! Run manifests and atomic file output.

use crate::error::{Classify, CliError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Bumped whenever the manifest, CSV or report layout changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the canonical JSON of the effective parameters.
    pub config_hash: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub wall_clock_secs: f64,
    pub status: String,
    pub details: serde_json::Map<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).internal(&format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).internal("creating temporary file")?;
    tmp.write_all(bytes).internal("writing temporary file")?;
    tmp.persist(path).map_err(|e| e.error).internal(&format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Collects what a command read and wrote while it runs.
pub struct Run {
    command: String,
    manifest_path: PathBuf,
    started: Instant,
    params: serde_json::Value,
    pub seed: Option<u64>,
    inputs: Vec<FileRef>,
    outputs: Vec<FileRef>,
    pub details: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    pub fn new(command: &str, manifest_path: PathBuf) -> Self {
        Run {
            command: command.to_string(),
            manifest_path,
            started: Instant::now(),
            params: serde_json::Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: serde_json::Map::new(),
        }
    }

    pub fn set_params<P: Serialize>(&mut self, params: &P) {
        self.params = serde_json::to_value(params).expect("parameters serialise");
    }

    /// Reads a file and records it with its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).input(&format!("reading {}", path.display()))?;
        self.record_input(&path.display().to_string(), &bytes);
        Ok(bytes)
    }

    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(FileRef { path: name.to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(path, bytes)?;
        self.record_output(path, bytes);
        Ok(())
    }

    /// Records a file written by someone else (e.g. a checkpoint).
    pub fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(FileRef { path: path.display().to_string(), sha256: sha256_hex(bytes) });
    }

    pub fn detail<V: Serialize>(&mut self, key: &str, value: V) {
        self.details.insert(key.to_string(), serde_json::to_value(value).expect("details serialise"));
    }

    pub fn finish(self, status: &str) -> Result<RunManifest, CliError> {
        let canonical = serde_json::to_vec(&self.params).expect("parameters serialise");
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(&canonical),
            params: self.params,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            status: status.to_string(),
            details: self.details,
        };
        let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        text.push(b'\n');
        write_atomic(&self.manifest_path, &text)?;
        Ok(manifest)
    }
}

/// `out.jsonl` gets its manifest at `out.jsonl.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
