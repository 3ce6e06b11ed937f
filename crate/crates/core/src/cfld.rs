//! CFLD container: one complex field or one hologram stack per file.
//!
//! Layout:
//!
//! ```text
//! "CFLD" 0x01 0x00 0x00 0x00          8-byte magic
//! u64 little-endian                   header length in bytes
//! UTF-8 JSON header                   {kind, n, pitch_um, wavelength_um,
//!                                      refractive_index, z_um?, dtype}
//! payload                             little-endian f64, row-major;
//!                                     complex as interleaved (re, im);
//!                                     stack planes consecutive in z order
//! ```

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HoloError, Result};
use crate::field::{ComplexField, HologramPlane, HologramStack};
use crate::grid::OpticalGrid;

pub const MAGIC: [u8; 8] = *b"CFLD\x01\0\0\0";

/// Headers larger than this are rejected as corrupt.
const MAX_HEADER: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: Kind,
    pub n: usize,
    pub pitch_um: f64,
    pub wavelength_um: f64,
    pub refractive_index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_um: Option<Vec<f64>>,
    pub dtype: Dtype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Field,
    Stack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cfld {
    Field(ComplexField),
    Stack(HologramStack),
}

fn header_for(grid: &OpticalGrid, kind: Kind, z_um: Option<Vec<f64>>) -> Header {
    Header {
        kind,
        n: grid.n(),
        pitch_um: grid.pitch(),
        wavelength_um: grid.wavelength(),
        refractive_index: grid.refractive_index(),
        z_um,
        dtype: match kind {
            Kind::Field => Dtype::C64,
            Kind::Stack => Dtype::F64,
        },
    }
}

fn write_header<W: Write>(w: &mut W, header: &Header) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn write_field<W: Write>(w: &mut W, f: &ComplexField) -> Result<()> {
    write_header(w, &header_for(f.grid(), Kind::Field, None))?;
    let mut buf = Vec::with_capacity(f.grid().len() * 16);
    for v in f.values().iter() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_stack<W: Write>(w: &mut W, s: &HologramStack) -> Result<()> {
    let sorted = s.sorted_by_z();
    write_header(w, &header_for(s.grid(), Kind::Stack, Some(sorted.zs())))?;
    let mut buf = Vec::with_capacity(s.grid().len() * s.m() * 8);
    for p in sorted.planes() {
        for v in p.amplitude().iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| HoloError::Format(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read<R: Read>(r: &mut R) -> Result<Cfld> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| HoloError::Format("missing magic".into()))?;
    if magic != MAGIC {
        return Err(HoloError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| HoloError::Format("missing header length".into()))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(HoloError::Format(format!("header length {len} too large")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| HoloError::Format("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| HoloError::Format(format!("header: {e}")))?;
    let grid = OpticalGrid::new(
        header.n,
        header.pitch_um,
        header.wavelength_um,
        header.refractive_index,
    )?;
    let n = grid.n();
    let cells = grid.len();
    let out = match (header.kind, header.dtype) {
        (Kind::Field, Dtype::C64) => {
            let raw = read_f64s(r, cells * 2)?;
            let values = Array2::from_shape_fn((n, n), |(row, col)| {
                let i = 2 * (row * n + col);
                Complex64::new(raw[i], raw[i + 1])
            });
            Cfld::Field(ComplexField::new(grid, values)?)
        }
        (Kind::Stack, Dtype::F64) => {
            let zs = header
                .z_um
                .ok_or_else(|| HoloError::Format("stack header without z_um".into()))?;
            let mut planes = Vec::with_capacity(zs.len());
            for z in zs {
                let raw = read_f64s(r, cells)?;
                let amp = Array2::from_shape_vec((n, n), raw).expect("n×n payload");
                planes.push(HologramPlane::new(z, amp)?);
            }
            Cfld::Stack(HologramStack::new(grid, planes)?)
        }
        (kind, dtype) => {
            return Err(HoloError::Format(format!(
                "unsupported kind/dtype pair {kind:?}/{dtype:?}"
            )))
        }
    };
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(HoloError::Format("trailing bytes after payload".into()));
    }
    Ok(out)
}

pub fn field_to_bytes(f: &ComplexField) -> Vec<u8> {
    let mut v = Vec::new();
    write_field(&mut v, f).expect("writing to a Vec cannot fail");
    v
}

pub fn stack_to_bytes(s: &HologramStack) -> Vec<u8> {
    let mut v = Vec::new();
    write_stack(&mut v, s).expect("writing to a Vec cannot fail");
    v
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Cfld> {
    read(&mut bytes)
}

pub fn save_field(path: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    write_atomic(path.as_ref(), &field_to_bytes(f))
}

pub fn save_stack(path: impl AsRef<Path>, s: &HologramStack) -> Result<()> {
    write_atomic(path.as_ref(), &stack_to_bytes(s))
}

pub fn load(path: impl AsRef<Path>) -> Result<Cfld> {
    from_bytes(&fs::read(path)?)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ComplexField> {
    match load(path)? {
        Cfld::Field(f) => Ok(f),
        Cfld::Stack(_) => Err(HoloError::Format("expected a field, found a stack".into())),
    }
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<HologramStack> {
    match load(path)? {
        Cfld::Stack(s) => Ok(s),
        Cfld::Field(_) => Err(HoloError::Format("expected a stack, found a field".into())),
    }
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().ok_or_else(|| {
        HoloError::InvalidArgument(format!("not a file path: {}", path.display()))
    })?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> OpticalGrid {
        OpticalGrid::new(8, 0.37, 0.53, 1.0).unwrap()
    }

    proptest! {
        #[test]
        fn field_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 128)) {
            let v = Array2::from_shape_fn((8, 8), |(r, c)| {
                let i = 2 * (r * 8 + c);
                Complex64::new(vals[i], vals[i + 1])
            });
            let f = ComplexField::new(grid(), v).unwrap();
            let back = from_bytes(&field_to_bytes(&f)).unwrap();
            match back {
                Cfld::Field(g) => {
                    for (a, b) in f.values().iter().zip(g.values()) {
                        prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                        prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
                    }
                }
                _ => prop_assert!(false, "kind changed"),
            }
        }

        #[test]
        fn stack_round_trip_is_bit_exact(
            vals in proptest::collection::vec(0f64..1e6, 128),
            z1 in -1e3f64..1e3,
            dz in 0.1f64..100.0,
        ) {
            let p1 = HologramPlane::new(z1, Array2::from_shape_vec((8, 8), vals[..64].to_vec()).unwrap()).unwrap();
            let p2 = HologramPlane::new(z1 + dz, Array2::from_shape_vec((8, 8), vals[64..].to_vec()).unwrap()).unwrap();
            let s = HologramStack::new(grid(), vec![p1, p2]).unwrap();
            let back = from_bytes(&stack_to_bytes(&s)).unwrap();
            prop_assert_eq!(back, Cfld::Stack(s));
        }
    }

    #[test]
    fn header_layout() {
        let f = ComplexField::constant(grid(), Complex64::new(1.0, -2.0));
        let bytes = field_to_bytes(&f);
        assert_eq!(&bytes[..8], b"CFLD\x01\0\0\0");
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["kind"], "field");
        assert_eq!(header["dtype"], "c64");
        assert_eq!(header["n"], 8);
        assert!(header.get("z_um").is_none());
        assert_eq!(bytes.len(), 16 + len + 64 * 16);
        assert_eq!(
            f64::from_le_bytes(bytes[16 + len..24 + len].try_into().unwrap()),
            1.0
        );
        assert_eq!(
            f64::from_le_bytes(bytes[24 + len..32 + len].try_into().unwrap()),
            -2.0
        );
    }

    #[test]
    fn stacks_are_written_in_z_order() {
        let a = HologramPlane::new(375.0, Array2::from_elem((8, 8), 2.0)).unwrap();
        let b = HologramPlane::new(300.0, Array2::from_elem((8, 8), 1.0)).unwrap();
        let s = HologramStack::new(grid(), vec![a, b]).unwrap();
        let bytes = stack_to_bytes(&s);
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header.z_um, Some(vec![300.0, 375.0]));
        assert_eq!(header.dtype, Dtype::F64);
        assert_eq!(
            f64::from_le_bytes(bytes[16 + len..24 + len].try_into().unwrap()),
            1.0
        );
    }

    #[test]
    fn rejects_corrupt_input() {
        let f = ComplexField::constant(grid(), Complex64::new(1.0, 0.0));
        let bytes = field_to_bytes(&f);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(from_bytes(&nan).is_err());
    }
}
