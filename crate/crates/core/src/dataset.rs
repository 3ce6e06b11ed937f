//! On-disk datasets: a directory of CFLD files plus a JSON manifest.
//!
//! ```text
//! dataset.json          manifest with per-file SHA-256 checksums
//! stack_00000.cfld      measured hologram stack of entry 0
//! object_00000.cfld     ground-truth object field of entry 0
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::audit;
use crate::cfld;
use crate::error::{HoloError, Result};
use crate::field::{ComplexField, HologramStack};
use crate::grid::OpticalGrid;
use crate::synth::{DatasetEntry, NoiseSpec, ObjectKind, SynthConfig, ZSpec};

pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub cfg: SynthConfig,
    pub grid: OpticalGrid,
    pub seed: u64,
    pub z: ZSpec,
    pub noise: NoiseSpec,
    pub count: usize,
    pub kind: ObjectKind,
    /// File name → lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

pub fn stack_file(i: usize) -> String {
    format!("stack_{i:05}.cfld")
}

pub fn object_file(i: usize) -> String {
    format!("object_{i:05}.cfld")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write entries and the manifest into `dir` (created if missing).
#[allow(clippy::too_many_arguments)]
pub fn write_dataset(
    dir: &Path,
    entries: &[DatasetEntry],
    cfg: &SynthConfig,
    grid: OpticalGrid,
    seed: u64,
    z: &ZSpec,
    noise: NoiseSpec,
    kind: ObjectKind,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let s = cfld::stack_to_bytes(&e.stack);
        let o = cfld::field_to_bytes(e.object.field());
        cfld::write_atomic(&dir.join(stack_file(i)), &s)?;
        cfld::write_atomic(&dir.join(object_file(i)), &o)?;
        checksums.insert(stack_file(i), sha256_hex(&s));
        checksums.insert(object_file(i), sha256_hex(&o));
    }
    let manifest = DatasetManifest {
        cfg: cfg.clone(),
        grid,
        seed,
        z: z.clone(),
        noise,
        count: entries.len(),
        kind,
        checksums,
    };
    cfld::write_atomic(
        &dir.join(MANIFEST_FILE),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| HoloError::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn read_checked(dir: &Path, name: &str, manifest: &DatasetManifest) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(name);
    let bytes = fs::read(&path)?;
    if let Some(expected) = manifest.checksums.get(name) {
        if &sha256_hex(&bytes) != expected {
            return Err(HoloError::Format(format!(
                "checksum mismatch for {}",
                path.display()
            )));
        }
    }
    Ok(bytes)
}

/// Measured stacks only; never touches object files.
pub fn read_stacks(dir: &Path) -> Result<Vec<HologramStack>> {
    let manifest = read_manifest(dir)?;
    (0..manifest.count)
        .map(
            |i| match cfld::from_bytes(&read_checked(dir, &stack_file(i), &manifest)?)? {
                cfld::Cfld::Stack(s) => Ok(s),
                cfld::Cfld::Field(_) => Err(HoloError::Format(format!(
                    "{} is not a stack",
                    stack_file(i)
                ))),
            },
        )
        .collect()
}

/// Ground-truth objects, for evaluation. Each read is audited.
pub fn read_objects(dir: &Path) -> Result<Vec<ComplexField>> {
    let manifest = read_manifest(dir)?;
    (0..manifest.count)
        .map(|i| {
            audit::record_object_read();
            match cfld::from_bytes(&read_checked(dir, &object_file(i), &manifest)?)? {
                cfld::Cfld::Field(f) => Ok(f),
                cfld::Cfld::Stack(_) => Err(HoloError::Format(format!(
                    "{} is not a field",
                    object_file(i)
                ))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_dataset;

    #[test]
    fn round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n: 16,
            ..SynthConfig::default()
        };
        let grid = OpticalGrid::with_defaults(16).unwrap();
        let z = ZSpec::standard_pair();
        let entries = make_dataset(
            &cfg,
            grid,
            &z,
            3,
            NoiseSpec::None,
            ObjectKind::AmplitudePhase,
            4,
        )
        .unwrap();
        let m = write_dataset(
            dir.path(),
            &entries,
            &cfg,
            grid,
            4,
            &z,
            NoiseSpec::None,
            ObjectKind::AmplitudePhase,
        )
        .unwrap();
        assert_eq!(m.checksums.len(), 6);

        let stacks = read_stacks(dir.path()).unwrap();
        for (s, e) in stacks.iter().zip(&entries) {
            assert_eq!(s, &e.stack);
        }
        let objects = read_objects(dir.path()).unwrap();
        assert_eq!(objects.len(), 3);

        // tampering is detected
        let p = dir.path().join(stack_file(1));
        let mut bytes = fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&p, bytes).unwrap();
        assert!(read_stacks(dir.path()).is_err());
    }
}
