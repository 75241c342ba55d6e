use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Git-style content hash: SHA-256 of `"blob <len>\0"` followed by the
/// bytes, as lowercase hex.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub hash: String,
}

/// What a command read, what it wrote and how long each stage took.
///
/// Paths under the manifest's own directory are stored relative to it, so
/// two runs into different directories list the same names.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(skip)]
    base: PathBuf,
}

impl RunManifest {
    /// `base` is the directory the manifest will be written to.
    pub fn new(command: &str, config: BTreeMap<String, String>, base: impl Into<PathBuf>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            base: base.into(),
        }
    }

    fn record(&self, path: &Path) -> Result<FileRecord> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let shown = path.strip_prefix(&self.base).unwrap_or(path);
        Ok(FileRecord {
            path: shown.display().to_string(),
            bytes: bytes.len() as u64,
            hash: git_blob_hash(&bytes),
        })
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let r = self.record(path.as_ref())?;
        self.inputs.push(r);
        Ok(())
    }

    pub fn add_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let r = self.record(path.as_ref())?;
        self.outputs.push(r);
        Ok(())
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Writes `manifest.json` into the base directory and returns its path.
    pub fn write(&self) -> Result<PathBuf> {
        let path = self.base.join("manifest.json");
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
