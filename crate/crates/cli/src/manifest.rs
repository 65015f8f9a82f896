//! Run manifest and the report envelope written by every command.

use std::path::Path;
use std::time::Instant;

use netfe::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&std::fs::read(path)?),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputFile>,
    /// SHA-256 of the canonical option set (the normalized config file for
    /// `simulate`).
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    pub version: String,
    /// Size after largest-component reduction.
    pub n: usize,
    pub m: usize,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputFile>, canonical_options: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs,
            config_hash: sha256_hex(canonical_options.as_bytes()),
            seed: None,
            rng: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            n: 0,
            m: 0,
        }
    }
}

/// The reproducible part of a report.
#[derive(Serialize)]
pub struct Body<'a, T: Serialize> {
    pub manifest: &'a RunManifest,
    pub report: &'a T,
}

/// `body` is deterministic for fixed inputs; timing and thread count sit
/// outside it and outside `body_sha256`.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub body: Body<'a, T>,
    pub body_sha256: String,
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

pub fn envelope<'a, T: Serialize>(manifest: &'a RunManifest, report: &'a T, started: Instant) -> Result<Envelope<'a, T>> {
    let body = Body { manifest, report };
    let hash = sha256_hex(serde_json::to_string(&body)?.as_bytes());
    Ok(Envelope {
        body,
        body_sha256: hash,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}
