use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

impl InputDigest {
    pub fn of(path: &Path, content: &[u8]) -> Self {
        let hash = Sha256::digest(content);
        Self {
            path: path.display().to_string(),
            sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            bytes: content.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

/// Provenance record written next to every report.
#[derive(Debug, Serialize)]
pub struct RunManifest<O: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub options: O,
    pub input: Option<InputDigest>,
    pub timings: Timings,
}

impl<O: Serialize> RunManifest<O> {
    pub fn new(command: &'static str, seed: u64, options: O, input: Option<InputDigest>, started: Instant) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            options,
            input,
            timings: Timings {
                total_seconds: started.elapsed().as_secs_f64(),
            },
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}
