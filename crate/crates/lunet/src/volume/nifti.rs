//! Single-file uncompressed NIfTI-1 (`n+1`) subset: 3D volumes of `u8`,
//! `i16` or `f32`, either byte order, with `scl_slope`/`scl_inter` applied.

use super::Volume;
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

struct Header<'a> {
    b: &'a [u8],
    big: bool,
}

impl Header<'_> {
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a: [u8; N] = self.b[off..off + N].try_into().unwrap();
        if self.big {
            a.reverse();
        }
        a
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.bytes(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.bytes(off))
    }
}

pub fn read_nifti(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE + 4 {
        return Err(Error::MalformedHeader(format!(
            "NIfTI file of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(Error::MalformedHeader(format!("sizeof_hdr is {le}, expected 348"))),
    };
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::MalformedHeader("magic is not \"n+1\"".into()));
    }
    let h = Header { b: bytes, big };
    let ndim = h.i16(40);
    let dim: Vec<i16> = (0..8).map(|i| h.i16(40 + 2 * i)).collect();
    if !(1..=7).contains(&ndim) || dim[1..=ndim as usize].iter().any(|&d| d < 1) {
        return Err(Error::MalformedHeader(format!("inconsistent dim field {dim:?}")));
    }
    if dim[4..=ndim.max(3) as usize].iter().any(|&d| d > 1) {
        return Err(Error::MalformedHeader(format!("only 3D volumes are supported, dim = {dim:?}")));
    }
    let size = |a: usize| if a <= ndim as usize { dim[a] as usize } else { 1 };
    let (nx, ny, nz) = (size(1), size(2), size(3));
    let datatype = h.i16(70);
    let bitpix = h.i16(72);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnsupportedDtype(other)),
    };
    if bitpix as usize != width * 8 {
        return Err(Error::MalformedHeader(format!(
            "bitpix {bitpix} disagrees with datatype {datatype}"
        )));
    }
    let pix = |a: usize| {
        let p = h.f32(76 + 4 * a).abs();
        if p > 0.0 && p.is_finite() {
            p
        } else {
            1.0
        }
    };
    let vox_offset = h.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::MalformedHeader(format!("vox_offset {vox_offset} is invalid")));
    }
    let (mut slope, inter) = (h.f32(112), h.f32(116));
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    let n = nx * ny * nz;
    let start = vox_offset as usize;
    let expected = n * width;
    let found = bytes.len().saturating_sub(start);
    if found < expected {
        return Err(Error::TruncatedData { expected, found });
    }
    let payload = &bytes[start..start + expected];
    let raw: Vec<f32> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f32).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                (if big { i16::from_be_bytes(a) } else { i16::from_le_bytes(a) }) as f32
            })
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| {
                let a = [c[0], c[1], c[2], c[3]];
                if big {
                    f32::from_be_bytes(a)
                } else {
                    f32::from_le_bytes(a)
                }
            })
            .collect(),
    };
    let voxels = raw.into_iter().map(|v| v * slope + inter).collect();
    Volume::new([nz, ny, nx], voxels, [pix(3), pix(2), pix(1)])
}

/// Writes a little-endian `f32` NIfTI-1 file with unit scaling.
pub fn write_nifti(vol: &Volume) -> Vec<u8> {
    let mut hdr = vec![0u8; HEADER_SIZE + 4];
    let put = |hdr: &mut Vec<u8>, off: usize, b: &[u8]| hdr[off..off + b.len()].copy_from_slice(b);
    put(&mut hdr, 0, &348i32.to_le_bytes());
    let [di, dj, dk] = vol.dims;
    let dim: [i16; 8] = [3, dk as i16, dj as i16, di as i16, 1, 1, 1, 1];
    for (a, d) in dim.iter().enumerate() {
        put(&mut hdr, 40 + 2 * a, &d.to_le_bytes());
    }
    put(&mut hdr, 70, &DT_FLOAT32.to_le_bytes());
    put(&mut hdr, 72, &32i16.to_le_bytes());
    let [si, sj, sk] = vol.voxel_size_mm;
    for (a, p) in [1.0f32, sk, sj, si].iter().enumerate() {
        put(&mut hdr, 76 + 4 * a, &p.to_le_bytes());
    }
    put(&mut hdr, 108, &((HEADER_SIZE + 4) as f32).to_le_bytes());
    put(&mut hdr, 112, &1.0f32.to_le_bytes());
    put(&mut hdr, 116, &0.0f32.to_le_bytes());
    put(&mut hdr, 344, b"n+1\0");
    hdr.reserve(vol.voxels.len() * 4);
    for v in &vol.voxels {
        hdr.extend_from_slice(&v.to_le_bytes());
    }
    hdr
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(datatype: i16, bitpix: i16, dims: [i16; 3]) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        h[40..42].copy_from_slice(&3i16.to_le_bytes());
        for (a, d) in dims.iter().enumerate() {
            h[42 + 2 * a..44 + 2 * a].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        h[72..74].copy_from_slice(&bitpix.to_le_bytes());
        h[108..112].copy_from_slice(&352f32.to_le_bytes());
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    #[test]
    fn complex_dtype_rejected() {
        let mut h = header(32, 64, [1, 1, 1]);
        h.extend_from_slice(&[0; 8]);
        assert!(matches!(read_nifti(&h), Err(Error::UnsupportedDtype(32))));
    }

    #[test]
    fn u8_with_scaling_and_axis_order() {
        let mut h = header(DT_UINT8, 8, [3, 2, 1]);
        h[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        h[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        h.extend_from_slice(&[0, 1, 2, 3, 4, 5]);
        let v = read_nifti(&h).unwrap();
        assert_eq!(v.dims, [1, 2, 3]);
        // x = 2, y = 1 is file element 5
        assert_eq!(v.get(0, 1, 2), 11.0);
    }

    #[test]
    fn i16_big_endian() {
        let mut h = header(DT_INT16, 16, [2, 1, 1]);
        for off in [0usize, 40, 42, 44, 46, 70, 72] {
            let w = if off == 0 { 4 } else { 2 };
            h[off..off + w].reverse();
        }
        h[108..112].reverse();
        h.extend_from_slice(&(-3i16).to_be_bytes());
        h.extend_from_slice(&(300i16).to_be_bytes());
        let v = read_nifti(&h).unwrap();
        assert_eq!(v.voxels, vec![-3.0, 300.0]);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut h = header(DT_FLOAT32, 32, [2, 2, 2]);
        h.extend_from_slice(&[0; 31]);
        assert!(matches!(read_nifti(&h), Err(Error::TruncatedData { expected: 32, found: 31 })));
        h[345] = b'x';
        assert!(matches!(read_nifti(&h), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn writer_round_trip() {
        let vol = Volume::new([2, 3, 4], (0..24).map(|v| v as f32 * 0.5 - 3.0).collect(), [1.0, 2.0, 3.0]).unwrap();
        let back = read_nifti(&write_nifti(&vol)).unwrap();
        assert_eq!(back, vol);
    }
}
