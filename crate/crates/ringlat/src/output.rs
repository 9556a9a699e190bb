//! Data files and the run manifest. Every file goes through [`RunOutput`]
//! so that the manifest lists all of them with their digests.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub struct RunOutput {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name == MANIFEST_NAME || self.files.iter().any(|f| f.path == name) {
            return Err(HarnessError::Internal(format!("output `{name}` written twice")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| HarnessError::Internal(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Internal(format!("{name}: {e}")))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Internal(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json`; the manifest itself is not part of the file
    /// list (its wall time differs between runs).
    pub fn finish(self, scenario: &str, config: &Config, wall_seconds: f64) -> Result<Manifest> {
        let m = Manifest {
            scenario: scenario.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            wall_seconds,
            files: self.files,
        };
        let path = self.dir.join(MANIFEST_NAME);
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(|e| HarnessError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(m)
    }
}

/// Re-hashes every listed file; returns the names whose content changed.
pub fn verify_manifest(dir: &Path, m: &Manifest) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for f in &m.files {
        let path = dir.join(&f.path);
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        if bytes.len() as u64 != f.bytes || sha256_hex(&bytes) != f.sha256 {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}
