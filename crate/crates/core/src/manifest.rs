//! Run manifests: what was run, on which inputs, with which seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved options, defaults included.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        let bytes = std::fs::read(p)?;
        self.inputs.push(InputDigest { path: p.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// True when both manifests describe the same computation.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config == other.config
            && self.inputs.iter().map(|i| &i.sha256).eq(other.inputs.iter().map(|i| &i.sha256))
            && self.seed == other.seed
            && self.version == other.version
    }
}
