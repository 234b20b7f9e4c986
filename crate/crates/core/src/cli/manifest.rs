use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::jobs::Job;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    pub wall_seconds: f64,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub seed: u64,
    /// Fully resolved configuration.
    pub job: Job,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub outputs: Vec<OutputFile>,
    /// Derived facts worth keeping next to the outputs, e.g. a pixel permutation.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
    pub timings: Timings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn describe_output(dir: &Path, name: &str) -> Result<OutputFile> {
    let bytes = fs::read(dir.join(name))?;
    Ok(OutputFile {
        path: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
