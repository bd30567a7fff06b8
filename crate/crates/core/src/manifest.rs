//! Run manifests: what was run, with which config and inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub corpus_fingerprints: BTreeMap<String, String>,
    pub code_version: String,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            corpus_fingerprints: BTreeMap::new(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_at: now(),
            finished_at: None,
        })
    }

    pub fn fingerprint(&mut self, name: &str, digest: String) {
        self.corpus_fingerprints.insert(name.into(), digest);
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(now());
    }

    /// Everything except timestamps; equal keys mean the run is repeatable.
    pub fn replay_key(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "corpus_fingerprints": self.corpus_fingerprints,
            "code_version": self.code_version,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// sha256 over a file, or over every file under a directory in sorted path order.
pub fn fingerprint_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    let mut buf = Vec::new();
    for f in files {
        if let Ok(rel) = f.strip_prefix(path) {
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
        }
        buf.clear();
        fs::File::open(&f)?.read_to_end(&mut buf)?;
        h.update(&buf);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(path: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    if path.is_dir() {
        for entry in fs::read_dir(path)? {
            collect_files(&entry?.path(), out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}
