//! Run manifests: resolved config, input digests, and output names.
//!
//! Manifests carry no timestamps, so re-running with identical inputs
//! reproduces them byte for byte.

use crate::CliResult;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    /// Input path -> sha256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `run_manifest.json` into the output directory.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    input_paths: &[&Path],
    outputs: &[&str],
) -> CliResult<()> {
    let mut inputs = BTreeMap::new();
    for p in input_paths {
        inputs.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        tool: "harvnet",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config,
        inputs,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| crate::CliError::Pipeline(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("run_manifest.json"), json + "\n")?;
    Ok(())
}
