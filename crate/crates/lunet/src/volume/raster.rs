//! 8-bit binary PGM (`P5`) rasters.

use std::path::Path;

use super::SliceImage;
use crate::error::{Error, Result};

pub fn encode_pgm(img: &SliceImage) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len());
    for (i, &p) in img.pixels.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::MalformedRaster(format!("pixel {i} is {p}, outside [0, 1]")));
        }
        out.push((p as f64 * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_raster(img: &SliceImage, path: &Path) -> Result<()> {
    let bytes = encode_pgm(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes a `P5` image with `maxval <= 255` into pixels `v / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<SliceImage> {
    let bad = |m: &str| Error::MalformedRaster(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header ended early"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header number {s:?}")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if w == 0 || h == 0 || !(1..=255).contains(&maxval) {
        return Err(bad(&format!("unsupported size {w}x{h} or maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), w * h)));
    }
    let pixels = payload.iter().map(|&v| (v as f64 / maxval as f64) as f32).collect();
    SliceImage::new(h, w, pixels)
}

/// Reads a PGM file. Plane metadata is not stored in the raster, so the
/// result carries the file stem as `source_id` and default plane/index.
pub fn read_raster(path: &Path) -> Result<SliceImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut img = decode_pgm(&bytes)?;
    img.source_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    Ok(img)
}
