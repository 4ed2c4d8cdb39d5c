//! `run.json`: what was run, with which config and seed, from which tree.

use std::fs;
use std::path::Path;
use std::process::Command;

use derf_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub git_describe: String,
    pub seed: Option<u64>,
    /// SHA-256 of the serialized effective config.
    pub config_hash: String,
    pub args: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_run_record(out: &Path, command: &str, seed: Option<u64>, config_text: &str) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        git_describe: git_describe(),
        seed,
        config_hash: sha256_hex(config_text),
        args: std::env::args().collect(),
    };
    let path = out.join("run.json");
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
