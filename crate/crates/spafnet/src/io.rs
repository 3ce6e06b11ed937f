//! Weights file:
//!
//! ```text
//! magic   8 bytes  "SPAFW\x01\0\0"
//! len     u64 LE   header length in bytes
//! header  JSON     {cfg, shapes, seed, fingerprint, dtype: "f32"}
//! payload f32 LE   parameters in declaration order
//! ```

use holo_core::cfld::write_atomic;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::SpafConfig;
use crate::error::{Result, SpafError};
use crate::net::{parameter_shapes, SpafWeights, TensorShape};
use crate::real::Real;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"SPAFW\x01\0\0";
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub cfg: SpafConfig,
    pub shapes: Vec<TensorShape>,
    pub seed: u64,
    pub fingerprint: String,
    pub dtype: String,
}

pub fn weights_to_bytes<T: Real>(
    w: &SpafWeights<T>,
    cfg: &SpafConfig,
    seed: u64,
    fingerprint: &str,
) -> Result<Vec<u8>> {
    w.check(cfg)?;
    let header = WeightsHeader {
        cfg: cfg.clone(),
        shapes: parameter_shapes(cfg),
        seed,
        fingerprint: fingerprint.to_string(),
        dtype: "f32".into(),
    };
    let json = serde_json::to_vec(&header)?;
    let flat = w.to_flat();
    let mut out = Vec::with_capacity(16 + json.len() + 4 * flat.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in flat {
        out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn weights_from_bytes<T: Real>(bytes: &[u8]) -> Result<(WeightsHeader, SpafWeights<T>)> {
    let fail = |m: &str| SpafError::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(fail("bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if len > MAX_HEADER || 16 + len as usize > bytes.len() {
        return Err(fail("header length out of range"));
    }
    let end = 16 + len as usize;
    let header: WeightsHeader = serde_json::from_slice(&bytes[16..end])?;
    if header.dtype != "f32" {
        return Err(SpafError::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    header.cfg.validate()?;
    if header.shapes != parameter_shapes(&header.cfg) {
        return Err(fail("declared shapes do not match the configuration"));
    }
    let payload = &bytes[end..];
    let count: usize = header
        .shapes
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum();
    if payload.len() != 4 * count {
        return Err(SpafError::Format(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            4 * count
        )));
    }
    let flat: Vec<T> = payload
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    let w = SpafWeights::from_flat(&header.cfg, &flat)?;
    Ok((header, w))
}

pub fn save_weights<T: Real>(
    path: &Path,
    w: &SpafWeights<T>,
    cfg: &SpafConfig,
    seed: u64,
    fingerprint: &str,
) -> Result<()> {
    write_atomic(path, &weights_to_bytes(w, cfg, seed, fingerprint)?)?;
    Ok(())
}

pub fn load_weights<T: Real>(path: &Path) -> Result<(WeightsHeader, SpafWeights<T>)> {
    weights_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SpafConfig {
        SpafConfig {
            n: 16,
            channels: 3,
            blocks: 2,
            half_windows: vec![5, 2],
            ..SpafConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let c = cfg();
        let w = SpafWeights::<f32>::init(&c, 9).unwrap();
        let bytes = weights_to_bytes(&w, &c, 9, "abc").unwrap();
        let (h, back) = weights_from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(h.seed, 9);
        assert_eq!(h.fingerprint, "abc");
        assert_eq!(h.cfg, c);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.spaf");
        let c = cfg();
        let w = SpafWeights::<f32>::init(&c, 1).unwrap();
        save_weights(&p, &w, &c, 1, "").unwrap();
        let (_, back) = load_weights::<f32>(&p).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn corruption_detected() {
        let c = cfg();
        let w = SpafWeights::<f32>::init(&c, 2).unwrap();
        let bytes = weights_to_bytes(&w, &c, 2, "").unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(weights_from_bytes::<f32>(&bad).is_err());
        assert!(weights_from_bytes::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(weights_from_bytes::<f32>(&long).is_err());
    }
}
