use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub files: Vec<ManifestEntry>,
    /// Command-specific records, e.g. augmentation transforms.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The single writer of a run's output directory. Every file goes through
/// it so the manifest lists each one with its hash.
pub struct Output {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents.as_ref()).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        self.push(name, contents.as_ref());
        Ok(())
    }

    /// Hashes a file that a library call already wrote to `path(name)`.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        self.push(name, &bytes);
        Ok(())
    }

    fn push(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish(self, command: &str, seed: Option<u64>, details: serde_json::Value) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            files: self.files,
            details,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
