//! Volumes, plane slicing and the on-disk formats for volumes, slice rasters
//! and dataset manifests.
//!
//! Voxels are indexed `(i, j, k)` and stored i-major with `k` fastest. Plane
//! convention: Transversal slices run along axis `i`, Coronal along `j`,
//! Sagittal along `k`. A NIfTI file with `x` fastest maps to `k = x`,
//! `j = y`, `i = z`.

mod dataset;
mod native;
mod nifti;
mod raster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    drop_empty_masks, exclude_sources, read_manifest, split_dataset, write_dataset, write_manifest,
    ManifestEntry, SliceDataset, SlicePair, Split,
};
pub use native::{read_native, write_native, NATIVE_MAGIC};
pub use nifti::{read_nifti, write_nifti};
pub use raster::{read_raster, write_raster};

/// Tolerance for deciding that a mask voxel is 0 or 1.
pub const BINARY_TOLERANCE: f32 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub voxels: Vec<f32>,
    pub dims: [usize; 3],
    pub voxel_size_mm: [f32; 3],
    pub intensity_range: (f32, f32),
}

impl Volume {
    /// Builds a volume and derives its intensity range from the voxels.
    pub fn new(dims: [usize; 3], voxels: Vec<f32>, voxel_size_mm: [f32; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::MalformedHeader(format!("volume dims {dims:?} contain zero")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(Error::DimMismatch(format!(
                "dims {dims:?} need {n} voxels, got {}",
                voxels.len()
            )));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedHeader(format!("voxel {i} is not finite")));
        }
        let min = voxels.iter().copied().fold(f32::INFINITY, f32::min);
        let max = voxels.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        Ok(Volume {
            voxels,
            dims,
            voxel_size_mm,
            intensity_range: (min, max),
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.index(i, j, k)]
    }

    fn check_binary(&self) -> Result<()> {
        for (index, &value) in self.voxels.iter().enumerate() {
            if value.abs() > BINARY_TOLERANCE && (value - 1.0).abs() > BINARY_TOLERANCE {
                return Err(Error::NonBinaryMask { index, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeFormat {
    Native,
    Nifti1,
}

impl VolumeFormat {
    /// `.nii` means NIfTI-1, anything else the native format.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("nii") => VolumeFormat::Nifti1,
            _ => VolumeFormat::Native,
        }
    }
}

pub fn read_volume(path: &std::path::Path, format: VolumeFormat) -> Result<Volume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        VolumeFormat::Native => read_native(&bytes),
        VolumeFormat::Nifti1 => read_nifti(&bytes),
    }
}

pub fn write_volume(vol: &Volume, path: &std::path::Path, format: VolumeFormat) -> Result<()> {
    let bytes = match format {
        VolumeFormat::Native => write_native(vol),
        VolumeFormat::Nifti1 => write_nifti(vol),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Nearest-neighbour resampling of a binary mask onto `target`'s grid, using
/// `src = floor(dst * src_dim / dst_dim)` per axis.
pub fn resample_mask(mask: &Volume, target: &Volume) -> Result<Volume> {
    mask.check_binary()?;
    let [si, sj, sk] = mask.dims;
    let [di, dj, dk] = target.dims;
    let map = |dst: usize, src_dim: usize, dst_dim: usize| dst * src_dim / dst_dim;
    let mut voxels = Vec::with_capacity(di * dj * dk);
    for i in 0..di {
        let a = map(i, si, di);
        for j in 0..dj {
            let b = map(j, sj, dj);
            for k in 0..dk {
                let v = mask.get(a, b, map(k, sk, dk));
                voxels.push(if v > 0.5 { 1.0 } else { 0.0 });
            }
        }
    }
    Volume::new(target.dims, voxels, target.voxel_size_mm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneLabel {
    Coronal,
    Sagittal,
    Transversal,
}

impl PlaneLabel {
    pub const ALL: [PlaneLabel; 3] = [PlaneLabel::Coronal, PlaneLabel::Sagittal, PlaneLabel::Transversal];

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneLabel::Coronal => "coronal",
            PlaneLabel::Sagittal => "sagittal",
            PlaneLabel::Transversal => "transversal",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            PlaneLabel::Coronal => "Coronal",
            PlaneLabel::Sagittal => "Sagittal",
            PlaneLabel::Transversal => "Transversal",
        }
    }

    /// Volume axis the slices are taken along.
    pub fn axis(self) -> usize {
        match self {
            PlaneLabel::Transversal => 0,
            PlaneLabel::Coronal => 1,
            PlaneLabel::Sagittal => 2,
        }
    }
}

impl std::fmt::Display for PlaneLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PlaneLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coronal" => Ok(PlaneLabel::Coronal),
            "sagittal" => Ok(PlaneLabel::Sagittal),
            "transversal" | "axial" => Ok(PlaneLabel::Transversal),
            other => Err(Error::InvalidConfig(format!("unknown plane {other:?}"))),
        }
    }
}

/// A 2D image with pixels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceImage {
    pub pixels: Vec<f32>,
    pub height: usize,
    pub width: usize,
    pub plane: PlaneLabel,
    pub source_id: String,
    pub slice_index: usize,
}

impl SliceImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height * width != pixels.len() || height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(SliceImage {
            pixels,
            height,
            width,
            plane: PlaneLabel::Transversal,
            source_id: String::new(),
            slice_index: 0,
        })
    }

    /// Same metadata as `self` with new pixels and size.
    pub fn with_pixels(&self, height: usize, width: usize, pixels: Vec<f32>) -> SliceImage {
        debug_assert_eq!(height * width, pixels.len());
        SliceImage {
            pixels,
            height,
            width,
            plane: self.plane,
            source_id: self.source_id.clone(),
            slice_index: self.slice_index,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.pixels[r * self.width + c]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.5).count()
    }
}

/// Raw plane `index` along `plane`'s axis as `(height, width, pixels)`.
pub fn plane_slice(vol: &Volume, plane: PlaneLabel, index: usize) -> (usize, usize, Vec<f32>) {
    let [di, dj, dk] = vol.dims;
    match plane {
        PlaneLabel::Transversal => {
            let start = vol.index(index, 0, 0);
            (dj, dk, vol.voxels[start..start + dj * dk].to_vec())
        }
        PlaneLabel::Coronal => {
            let mut px = Vec::with_capacity(di * dk);
            for i in 0..di {
                let start = vol.index(i, index, 0);
                px.extend_from_slice(&vol.voxels[start..start + dk]);
            }
            (di, dk, px)
        }
        PlaneLabel::Sagittal => {
            let mut px = Vec::with_capacity(di * dj);
            for i in 0..di {
                for j in 0..dj {
                    px.push(vol.get(i, j, index));
                }
            }
            (di, dj, px)
        }
    }
}

/// Min-max normalizes to `[0, 1]`; a constant input becomes all zeros.
pub fn normalize_min_max(px: &mut [f32]) {
    let min = px.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let max = px.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let range = max - min;
    for p in px.iter_mut() {
        *p = if range > 0.0 {
            ((*p as f64 - min) / range) as f32
        } else {
            0.0
        };
    }
}

/// All slices of `vol` and `mask` along `plane`, images normalized per slice.
pub fn extract_slices(vol: &Volume, mask: &Volume, plane: PlaneLabel, source_id: &str) -> Result<Vec<SlicePair>> {
    if vol.dims != mask.dims {
        return Err(Error::DimMismatch(format!(
            "volume {:?} vs mask {:?}",
            vol.dims, mask.dims
        )));
    }
    mask.check_binary()?;
    let n = vol.dims[plane.axis()];
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let (h, w, mut img) = plane_slice(vol, plane, s);
        normalize_min_max(&mut img);
        let (_, _, m) = plane_slice(mask, plane, s);
        let m = m.into_iter().map(|v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let meta = |pixels| SliceImage {
            pixels,
            height: h,
            width: w,
            plane,
            source_id: source_id.to_string(),
            slice_index: s,
        };
        out.push(SlicePair {
            image: meta(img),
            mask: meta(m),
        });
    }
    Ok(out)
}

fn corner_aligned(dst: usize, src_dim: usize, dst_dim: usize) -> f64 {
    if dst_dim <= 1 {
        0.0
    } else {
        dst as f64 * (src_dim - 1) as f64 / (dst_dim - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling.
pub fn resize_bilinear(img: &SliceImage, out_h: usize, out_w: usize) -> SliceImage {
    assert!(out_h >= 1 && out_w >= 1, "output size must be positive");
    let mut px = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let y = corner_aligned(r, img.height, out_h);
        let y0 = (y.floor() as usize).min(img.height - 1);
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = y - y0 as f64;
        for c in 0..out_w {
            let x = corner_aligned(c, img.width, out_w);
            let x0 = (x.floor() as usize).min(img.width - 1);
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = x - x0 as f64;
            let top = img.at(y0, x0) as f64 * (1.0 - fx) + img.at(y0, x1) as f64 * fx;
            let bot = img.at(y1, x0) as f64 * (1.0 - fx) + img.at(y1, x1) as f64 * fx;
            px.push((top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    img.with_pixels(out_h, out_w, px)
}

/// Nearest-neighbour resize with `src = floor(dst * src_dim / dst_dim)`.
pub fn resize_nearest(img: &SliceImage, out_h: usize, out_w: usize) -> SliceImage {
    assert!(out_h >= 1 && out_w >= 1, "output size must be positive");
    let mut px = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let sr = r * img.height / out_h;
        for c in 0..out_w {
            px.push(img.at(sr, c * img.width / out_w));
        }
    }
    img.with_pixels(out_h, out_w, px)
}

/// Resizes an image/mask pair: bilinear for the image, nearest for the mask.
pub fn resize_pair(pair: &SlicePair, out_h: usize, out_w: usize) -> SlicePair {
    if pair.image.height == out_h && pair.image.width == out_w {
        return pair.clone();
    }
    SlicePair {
        image: resize_bilinear(&pair.image, out_h, out_w),
        mask: resize_nearest(&pair.mask, out_h, out_w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3]) -> Volume {
        let n = dims.iter().product();
        Volume::new(dims, (0..n).map(|v| v as f32).collect(), [1.0; 3]).unwrap()
    }

    #[test]
    fn plane_slices_follow_axis_convention() {
        let v = ramp([2, 3, 4]);
        let (h, w, t) = plane_slice(&v, PlaneLabel::Transversal, 1);
        assert_eq!((h, w), (3, 4));
        assert_eq!(t[0], v.get(1, 0, 0));
        let (h, w, c) = plane_slice(&v, PlaneLabel::Coronal, 2);
        assert_eq!((h, w), (2, 4));
        assert_eq!(c[5], v.get(1, 2, 1));
        let (h, w, s) = plane_slice(&v, PlaneLabel::Sagittal, 3);
        assert_eq!((h, w), (2, 3));
        assert_eq!(s[4], v.get(1, 1, 3));
    }

    #[test]
    fn normalization_and_constant_slices() {
        let mut px = vec![2.0, 4.0, 3.0];
        normalize_min_max(&mut px);
        assert_eq!(px, vec![0.0, 1.0, 0.5]);
        let mut c = vec![7.0; 4];
        normalize_min_max(&mut c);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn resample_single_voxel_upsample() {
        let mut m = vec![0.0; 8];
        m[7] = 1.0;
        let mask = Volume::new([2, 2, 2], m, [1.0; 3]).unwrap();
        let target = Volume::new([4, 4, 4], vec![0.0; 64], [0.5; 3]).unwrap();
        let out = resample_mask(&mask, &target).unwrap();
        assert_eq!(out.dims, [4, 4, 4]);
        assert_eq!(out.voxels.iter().filter(|&&v| v == 1.0).count(), 8);
        assert_eq!(out.get(3, 3, 3), 1.0);
        assert_eq!(out.get(1, 3, 3), 0.0);
    }

    #[test]
    fn resample_rejects_non_binary() {
        let mask = Volume::new([1, 1, 2], vec![0.0, 0.5], [1.0; 3]).unwrap();
        assert!(matches!(
            resample_mask(&mask, &mask),
            Err(Error::NonBinaryMask { index: 1, .. })
        ));
    }

    #[test]
    fn bilinear_two_by_two_rows() {
        let img = SliceImage::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 4, 4);
        for r in 0..4 {
            for c in 0..4 {
                assert!((out.at(r, c) - c as f32 / 3.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn nearest_mask_stays_binary() {
        let img = SliceImage::new(3, 3, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = resize_nearest(&img, 7, 5);
        assert!(out.pixels.iter().all(|&p| p == 0.0 || p == 1.0));
        assert_eq!(out.at(0, 0), 0.0);
        assert_eq!(out.at(6, 4), 1.0);
    }

    #[test]
    fn extract_counts_and_dim_mismatch() {
        let v = ramp([4, 5, 6]);
        let m = Volume::new([4, 5, 6], vec![0.0; 120], [1.0; 3]).unwrap();
        for plane in PlaneLabel::ALL {
            let s = extract_slices(&v, &m, plane, "p").unwrap();
            assert_eq!(s.len(), v.dims[plane.axis()]);
            assert!(s.iter().all(|p| p.image.pixels.iter().cloned().fold(0.0, f32::max) == 1.0));
        }
        let bad = Volume::new([4, 5, 5], vec![0.0; 100], [1.0; 3]).unwrap();
        assert!(matches!(extract_slices(&v, &bad, PlaneLabel::Coronal, "p"), Err(Error::DimMismatch(_))));
    }
}
