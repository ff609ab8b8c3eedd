//! Run manifests: the context needed to reproduce a run with the same
//! binary. Written as a sidecar so the artifact itself stays byte-identical
//! across reruns; the timestamp lives only here.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        input_sha256: Option<String>,
    ) -> Self {
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_sha256,
            timestamp_unix,
        }
    }

    /// Writes `<artifact>.manifest.json` next to the artifact.
    pub fn write_next_to(&self, artifact: &Path) -> Result<(), CliError> {
        let mut path = artifact.as_os_str().to_owned();
        path.push(".manifest.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Internal(format!("serializing manifest: {e}")))?;
        std::fs::write(&path, body + "\n").map_err(|e| {
            CliError::Internal(format!("writing {}: {e}", Path::new(&path).display()))
        })
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}
