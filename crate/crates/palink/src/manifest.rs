//! Run manifest, written as `manifest.json` next to the results.
//!
//! ```json
//! {
//!   "format": "palink-manifest", "version": 1,
//!   "tool": "palink", "tool_version": "0.1.0",
//!   "scenario": "desk", "scenario_hash": "<sha256 hex>", "seed": 7, "jobs": 1,
//!   "wall_clock_s": 12.5,
//!   "legs": [{ "name": "fully-digital_linear_none", "architecture": "fully-digital",
//!              "pa": "linear", "compensation": "none", "metrics": ["psd", "ber"],
//!              "status": "ok", "error": null, "wall_clock_s": 3.2,
//!              "outputs": ["spectra/fully-digital_linear_none/psd_-12.5.csv", ...] }],
//!   "outputs": [{ "path": "...", "sha256": "<hex>", "bytes": 1234 }]
//! }
//! ```
//!
//! Paths are relative to the output directory and use `/`. `outputs`
//! lists every file the run wrote other than the manifest itself, sorted by
//! path. Only `wall_clock_s` and `jobs` vary between reruns of the same
//! scenario and seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const FORMAT: &str = "palink-manifest";
pub const VERSION: u32 = 1;
pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub name: String,
    pub architecture: String,
    pub pa: String,
    pub compensation: String,
    pub metrics: Vec<String>,
    pub status: LegStatus,
    pub error: Option<String>,
    pub wall_clock_s: f64,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool: String,
    pub tool_version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub jobs: usize,
    pub wall_clock_s: f64,
    pub legs: Vec<LegRecord>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn succeeded(&self) -> usize {
        self.legs.iter().filter(|l| l.status == LegStatus::Ok).count()
    }

    /// `(path, sha256)` pairs, the part of the manifest that must be
    /// identical across reruns.
    pub fn content_hashes(&self) -> Vec<(String, String)> {
        self.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(FILE_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::Format { path, kind: "manifest" });
        }
        Ok(m)
    }
}

pub fn hash_file(root: &Path, rel: &str) -> Result<OutputRecord> {
    let path = root.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(OutputRecord { path: rel.to_string(), sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 })
}
