//! Run manifests: what a command read, what it wrote, and everything else
//! needed to repeat it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use igt_rag::artifact::{atomic_write, sha256_hex};

use crate::config::{Pipeline, PipelineConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub components: BTreeMap<String, String>,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub fingerprints: BTreeMap<String, String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub started_at: u64,
    pub finished_at: u64,
}

/// Collects a manifest while a command runs.
pub struct ManifestBuilder<'a> {
    pipeline: &'a Pipeline,
    manifest: RunManifest,
}

impl<'a> ManifestBuilder<'a> {
    pub fn start(pipeline: &'a Pipeline, command: &str) -> Result<Self, CliError> {
        let mut components = BTreeMap::new();
        components.insert("igt-rag".to_string(), env!("CARGO_PKG_VERSION").to_string());
        let mut b = ManifestBuilder {
            pipeline,
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                components,
                config: pipeline.config.clone(),
                seeds: BTreeMap::new(),
                fingerprints: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: pipeline.now(),
                finished_at: 0,
            },
        };
        if let Some(f) = &pipeline.config_file {
            b.input(f)?;
        }
        Ok(b)
    }

    pub fn component(&mut self, name: &str, version: impl Into<String>) {
        self.manifest.components.insert(name.to_string(), version.into());
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn fingerprint(&mut self, name: &str, value: impl Into<String>) {
        self.manifest.fingerprints.insert(name.to_string(), value.into());
    }

    /// Hashes an input file, or every file directly inside a directory.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        for p in files(path)? {
            let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            self.manifest.inputs.push(FileHash { path: self.pipeline.display(&p), sha256: sha256_hex(&bytes) });
        }
        Ok(())
    }

    /// Writes an output atomically and records its hash.
    pub fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let bytes = bytes.as_ref();
        atomic_write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.record_output(path, bytes);
        Ok(())
    }

    /// Records an output written by other code (every file of a directory).
    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        for p in files(path)? {
            let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            self.record_output(&p, &bytes);
        }
        Ok(())
    }

    fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.outputs.push(FileHash { path: self.pipeline.display(path), sha256: sha256_hex(bytes) });
    }

    /// Writes the manifest to `<output_dir>/manifest-<name>.json` and returns its path.
    pub fn finish(mut self, name: &str) -> Result<PathBuf, CliError> {
        self.manifest.finished_at = self.pipeline.now();
        let path = self.pipeline.output(&format!("manifest-{name}.json"));
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        atomic_write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
