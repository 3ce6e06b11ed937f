//! `run.json`: everything needed to reproduce a command's outputs. It is
//! written before any other artifact and contains no timestamps or paths of
//! the output directory, so identical reruns produce identical manifests.

use holo_core::cfld::write_atomic;
use holo_core::dataset::{sha256_hex, MANIFEST_FILE};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, Result};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
    /// Input path → SHA-256 of its content (the dataset manifest for dataset
    /// directories, which itself lists every file's checksum).
    pub inputs: BTreeMap<String, String>,
}

/// Checksums for each input: files are hashed directly, dataset
/// directories through their manifest.
pub fn checksum_inputs(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths {
        let file = if p.is_dir() {
            p.join(MANIFEST_FILE)
        } else {
            p.to_path_buf()
        };
        let bytes = std::fs::read(&file)
            .map_err(|e| CliError::data(format!("cannot read input {}: {e}", file.display())))?;
        out.insert(p.display().to_string(), sha256_hex(&bytes));
    }
    Ok(out)
}

pub fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    config: &C,
    inputs: BTreeMap<String, String>,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let m = RunManifest {
        tool: "holo",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        inputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    write_atomic(&out.join(RUN_MANIFEST), &bytes)?;
    Ok(())
}
