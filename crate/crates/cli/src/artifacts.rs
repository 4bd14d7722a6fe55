//! Input digests and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Recorded in every JSON artifact so results can be traced back to their inputs.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(config_sha256: String, inputs: Vec<InputDigest>) -> Self {
        Self {
            tool: concat!("scalelaw ", env!("CARGO_PKG_VERSION")).to_string(),
            config_sha256,
            inputs,
        }
    }
}

/// Read a whole input file and remember its digest.
pub fn read_input(path: &Path) -> anyhow::Result<(Vec<u8>, InputDigest)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    Ok((bytes, digest))
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json(&self, name: &str, value: &Value) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}
