//! Run manifests: enough to re-run a subcommand and check its outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::formats::{read_bytes, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub keyplan: String,
    pub checkpoint_format: String,
    pub shard_format: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            keyplan: env!("CARGO_PKG_VERSION").into(),
            checkpoint_format: "KDNP1".into(),
            shard_format: "KDDS1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// The fully resolved subcommand configuration.
    pub config: Value,
    pub versions: Versions,
    /// Input file to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Manifest {
            command: command.into(),
            seed,
            config,
            versions: Versions::default(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    /// Hashes every file named in `files` under `dir` and writes the manifest there.
    pub fn finish(mut self, dir: &Path, files: &[String]) -> Result<Manifest> {
        for f in files {
            self.outputs.insert(f.clone(), sha256_file(&dir.join(f))?);
        }
        write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }
}
