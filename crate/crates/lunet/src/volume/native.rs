//! `LUV1` raw volume format.
//!
//! ```text
//! "LUV1"  u32 Di  u32 Dj  u32 Dk  3 x f32 voxel size  f32 min  f32 max
//! Di*Dj*Dk x f32 voxels, i-major (k fastest)
//! ```
//! Little-endian throughout.

use super::Volume;
use crate::error::{Error, Result};

pub const NATIVE_MAGIC: &[u8; 4] = b"LUV1";
const HEADER_LEN: usize = 4 + 3 * 4 + 3 * 4 + 2 * 4;

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

pub fn read_native(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "native header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != NATIVE_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected LUV1".into()));
    }
    let dims = [u32_at(bytes, 4) as usize, u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize];
    if dims.contains(&0) {
        return Err(Error::MalformedHeader(format!("dims {dims:?} contain zero")));
    }
    let voxel_size_mm = [f32_at(bytes, 16), f32_at(bytes, 20), f32_at(bytes, 24)];
    let range = (f32_at(bytes, 28), f32_at(bytes, 32));
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader(format!("dims {dims:?} overflow")))?;
    let expected = n * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} bytes after the voxel payload",
            payload.len() - expected
        )));
    }
    let voxels: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut vol = Volume::new(dims, voxels, voxel_size_mm)?;
    let (lo, hi) = vol.intensity_range;
    if !(range.0 <= lo && hi <= range.1) {
        return Err(Error::MalformedHeader(format!(
            "stored range {range:?} does not cover voxel range ({lo}, {hi})"
        )));
    }
    vol.intensity_range = range;
    Ok(vol)
}

pub fn write_native(vol: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + vol.voxels.len() * 4);
    out.extend_from_slice(NATIVE_MAGIC);
    for d in vol.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in vol.voxel_size_mm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&vol.intensity_range.0.to_le_bytes());
    out.extend_from_slice(&vol.intensity_range.1.to_le_bytes());
    for v in &vol.voxels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cube_file_order() {
        let mut bytes = NATIVE_MAGIC.to_vec();
        for d in [2u32, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for f in [1.0f32, 1.0, 1.0, 0.0, 7.0] {
            bytes.extend_from_slice(&f.to_le_bytes());
        }
        for v in 0..8 {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let vol = read_native(&bytes).unwrap();
        assert_eq!(vol.get(1, 1, 1), 7.0);
        assert_eq!(vol.get(0, 1, 0), 2.0);
        assert_eq!(write_native(&vol), bytes);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_native(b"LUV1"), Err(Error::MalformedHeader(_))));
        let vol = Volume::new([2, 1, 1], vec![0.0, 1.0], [1.0; 3]).unwrap();
        let mut bytes = write_native(&vol);
        bytes[0] = b'X';
        assert!(matches!(read_native(&bytes), Err(Error::MalformedHeader(_))));
        let bytes = write_native(&vol);
        assert!(matches!(
            read_native(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedData { expected: 8, found: 7 })
        ));
    }
}
