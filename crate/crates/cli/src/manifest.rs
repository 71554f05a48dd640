use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Data files that take part in the data hash.
const DATA_EXTENSIONS: [&str; 3] = ["tsv", "feat", "vocab"];

/// Provenance record written into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net_config: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net_config_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Hash over the names and contents of the data files in `dir`, in name
/// order.
pub fn sha256_data_dir(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| DATA_EXTENSIONS.iter().any(|d| x == *d)))
        .collect();
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
        h.update(name.as_bytes());
        h.update([0]);
        h.update(fs::read(&f).with_context(|| format!("reading {}", f.display()))?);
        h.update([0]);
    }
    Ok(hex(&h.finalize()))
}

fn existing(path: &Path, what: &str) -> Result<PathBuf> {
    if !path.exists() {
        bail!("{} {} does not exist", what, path.display());
    }
    Ok(path.to_path_buf())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            program: None,
            program_sha256: None,
            data_dir: None,
            data_sha256: None,
            net_config: None,
            net_config_sha256: None,
            checkpoint: None,
            mode: None,
            solver: None,
            pool: None,
            seed,
            folds: None,
            output: None,
        }
    }

    pub fn with_program(mut self, path: &Path) -> Result<Self> {
        self.program = Some(existing(path, "program")?);
        self.program_sha256 = Some(sha256_file(path)?);
        Ok(self)
    }

    pub fn with_data(mut self, dir: &Path) -> Result<Self> {
        self.data_dir = Some(existing(dir, "data directory")?);
        self.data_sha256 = Some(sha256_data_dir(dir)?);
        Ok(self)
    }

    pub fn with_net_config(mut self, path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            self.net_config = Some(existing(p, "network config")?);
            self.net_config_sha256 = Some(sha256_file(p)?);
        }
        Ok(self)
    }

    pub fn with_checkpoint(mut self, path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            self.checkpoint = Some(existing(p, "checkpoint")?);
        }
        Ok(self)
    }

    pub fn json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// The manifest as one comment line, e.g. `# manifest {...}`.
    pub fn comment(&self, marker: &str) -> String {
        format!("{} manifest {}\n", marker, self.json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_hash_ignores_non_data_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("A.tsv"), "x\t1\n").unwrap();
        let before = sha256_data_dir(dir.path()).unwrap();
        fs::write(dir.path().join("program.dr"), "entity X\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "hi").unwrap();
        assert_eq!(sha256_data_dir(dir.path()).unwrap(), before);
        fs::write(dir.path().join("A.tsv"), "x\t0\n").unwrap();
        assert_ne!(sha256_data_dir(dir.path()).unwrap(), before);
    }

    #[test]
    fn missing_paths_are_rejected() {
        assert!(RunManifest::new("ground", 0).with_program(Path::new("/nonexistent/p.dr")).is_err());
    }
}
