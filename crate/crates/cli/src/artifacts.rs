//! Atomic artifact writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pvi_core::surface::ValueSurface;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::io(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn to_json_bytes<S: Serialize>(value: &S) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports serialize");
    out.push(b'\n');
    out
}

/// Collects artifacts written under one output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(rel), bytes)?;
        self.entries.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<(), CliError> {
        self.write(rel, &to_json_bytes(value))
    }

    /// Single-line JSON, for reports carrying per-node arrays.
    pub fn write_json_compact<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<(), CliError> {
        let mut out = serde_json::to_vec(value).expect("reports serialize");
        out.push(b'\n');
        self.write(rel, &out)
    }

    /// `<stem>.csv` with the values and `<stem>.json` with the grid metadata.
    /// Returns the CSV path.
    pub fn write_surface(&mut self, stem: &str, surface: &ValueSurface<f64>) -> Result<String, CliError> {
        let mut csv = Vec::new();
        surface
            .write_csv(&mut csv)
            .map_err(|e| CliError::solver(format!("writing {stem}.csv"), e))?;
        let csv_path = format!("{stem}.csv");
        self.write(&csv_path, &csv)?;
        self.write_json(&format!("{stem}.json"), &surface.metadata())?;
        Ok(csv_path)
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    /// Write the manifest; it lists every artifact but not itself.
    pub fn finish(self, config: &ExperimentConfig) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            kind: "run_manifest".into(),
            config: config.clone(),
            artifacts: self.entries,
        };
        write_atomic(&self.dir.join(MANIFEST_FILE), &to_json_bytes(&manifest))?;
        Ok(manifest)
    }
}
