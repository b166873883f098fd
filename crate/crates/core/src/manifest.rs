//! Per-invocation run manifest: effective config, seeds, timestamps and a
//! content hash for every produced file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::demo::write_file;
use crate::error::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducedFile {
    /// Relative to the manifest's directory when possible.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: Config,
    pub seeds: Vec<u64>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub files: Vec<ProducedFile>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Config, seeds: Vec<u64>, started_unix_s: f64) -> Self {
        Self {
            schema_version: RUN_MANIFEST_SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            seeds,
            started_unix_s,
            finished_unix_s: started_unix_s,
            files: Vec::new(),
        }
    }

    /// Hashes `files` and writes the manifest into `dir`.
    pub fn finish(mut self, dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        for f in files {
            let (sha256, bytes) = sha256_file(f)?;
            let path = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
            self.files.push(ProducedFile { path, sha256, bytes });
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.finished_unix_s = unix_now();
        let out = dir.join(RUN_MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(&self)?;
        json.push('\n');
        write_file(&out, json.as_bytes())?;
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_every_file_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        std::fs::write(&a, b"abc").unwrap();
        let m = RunManifest::new("eval", &Config::default(), vec![7], unix_now());
        let path = m.finish(dir.path(), &[a]).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back.files.len(), 1);
        assert_eq!(back.files[0].path, "a.csv");
        assert_eq!(back.files[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(back.config, Config::default());
    }
}
