//! Run manifests: what ran, with which config, and what it wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    /// The effective configuration, as TOML text.
    pub config: String,
    /// Hex SHA-256 of `config`.
    pub config_digest: String,
    pub started_utc: String,
    pub finished_utc: String,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: String, started_utc: String, outputs: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed,
            config_digest: digest(&config),
            config,
            started_utc,
            finished_utc: now_utc(),
            outputs,
        }
    }

    pub fn digest_matches(&self) -> bool {
        digest(&self.config) == self.config_digest
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
