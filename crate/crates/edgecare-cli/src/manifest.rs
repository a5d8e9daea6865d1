//! Run manifests: every output directory records exactly how it was made.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What produced an output directory. Reruns with an equal manifest
/// produce byte-equal artifacts, so the manifest doubles as a cache key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Full argv of the invocation.
    pub command: Vec<String>,
    /// Named seeds consumed by the run.
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every input file (configs, models, streams) by role.
    pub input_hashes: BTreeMap<String, String>,
    /// Paths written, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new() -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            seeds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    /// Ignores the binary path in `command[0]`, which varies across
    /// installations of the same tool.
    fn same_run(&self, other: &RunManifest) -> bool {
        self.command.get(1..) == other.command.get(1..)
            && self.seeds == other.seeds
            && self.input_hashes == other.input_hashes
    }

    /// Creates the output directory and enforces the one-manifest rule: a
    /// directory already claimed by a *different* run is refused; a rerun
    /// of the same invocation may overwrite its own artifacts.
    pub fn claim_dir(&self, out: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(());
        }
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let existing: RunManifest = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::Data(format!("{} is not a run manifest: {e}", path.display()))
        })?;
        if self.same_run(&existing) {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "output directory {} already holds a different run (delete it or pick another --out)",
                out.display()
            )))
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let path = out.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, body + "\n")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
