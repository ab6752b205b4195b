use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    /// SHA-256 over the input dataset files, in a fixed order.
    pub dataset_fingerprint: String,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
}

/// Hash each file's name and contents in order.
pub fn fingerprint(files: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for path in files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        let mut f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        loop {
            let n = f.read(&mut buf).with_context(|| format!("cannot read {}", path.display()))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    /// Checks that every artifact exists, then writes the manifest at the
    /// root of `out`.
    pub fn write(mut self, out: &Path, artifacts: &[PathBuf]) -> Result<PathBuf> {
        for path in artifacts {
            if !path.is_file() {
                bail!("artifact {} was not written", path.display());
            }
        }
        self.artifacts = artifacts
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).to_string_lossy().into_owned())
            .collect();
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
