//! Slice datasets, the seeded train/test partition and the TSV manifest.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_raster, write_raster, PlaneLabel, SliceImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SlicePair {
    pub image: SliceImage,
    pub mask: SliceImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceDataset {
    pub items: Vec<SlicePair>,
    pub split: Vec<Split>,
    pub seed: u64,
}

impl SliceDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }

    /// Stacks the selected pairs into `[n, 1, H, W]` image and mask tensors.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor)> {
        let first = idx.first().ok_or(Error::EmptyDataset)?;
        let (h, w) = (self.items[*first].image.height, self.items[*first].image.width);
        let mut x = Vec::with_capacity(idx.len() * h * w);
        let mut y = Vec::with_capacity(idx.len() * h * w);
        for &i in idx {
            let p = self.items.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.items.len(),
            })?;
            if (p.image.height, p.image.width) != (h, w) || (p.mask.height, p.mask.width) != (h, w) {
                return Err(Error::ShapeMismatch(format!(
                    "item {i} is {}x{}, batch is {h}x{w}",
                    p.image.height, p.image.width
                )));
            }
            x.extend_from_slice(&p.image.pixels);
            y.extend_from_slice(&p.mask.pixels);
        }
        let shape = [idx.len(), 1, h, w];
        Ok((Tensor::new(&shape, x)?, Tensor::new(&shape, y)?))
    }

    /// Resizes every pair to `h x w` (bilinear images, nearest masks).
    pub fn resized(&self, h: usize, w: usize) -> SliceDataset {
        SliceDataset {
            items: self.items.iter().map(|p| super::resize_pair(p, h, w)).collect(),
            split: self.split.clone(),
            seed: self.seed,
        }
    }

    /// Keeps the pairs whose plane is `plane`, preserving their split tags.
    pub fn plane_subset(&self, plane: PlaneLabel) -> SliceDataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.items[i].image.plane == plane).collect();
        SliceDataset {
            items: keep.iter().map(|&i| self.items[i].clone()).collect(),
            split: keep.iter().map(|&i| self.split[i]).collect(),
            seed: self.seed,
        }
    }
}

/// Seeded shuffle; the first `round(fraction_test * N)` shuffled items are
/// tagged Test, the rest Train.
pub fn split_dataset(items: Vec<SlicePair>, fraction_test: f64, seed: u64) -> Result<SliceDataset> {
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(fraction_test > 0.0 && fraction_test < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {fraction_test} must lie strictly between 0 and 1"
        )));
    }
    let n = items.len();
    let n_test = (fraction_test * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Train; n];
    for &i in &order[..n_test] {
        split[i] = Split::Test;
    }
    Ok(SliceDataset { items, split, seed })
}

/// Drops pairs whose mask has no foreground pixel.
pub fn drop_empty_masks(items: Vec<SlicePair>) -> Vec<SlicePair> {
    items.into_iter().filter(|p| p.mask.foreground_count() > 0).collect()
}

/// Drops pairs whose `source_id` is listed in `exclude`.
pub fn exclude_sources(items: Vec<SlicePair>, exclude: &[String]) -> Vec<SlicePair> {
    let set: HashSet<&str> = exclude.iter().map(String::as_str).collect();
    items.into_iter().filter(|p| !set.contains(p.image.source_id.as_str())).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub source_id: String,
    pub plane: PlaneLabel,
    pub slice_index: usize,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub split: Split,
}

const MANIFEST_HEADER: &str = "\
# lunet slice manifest
# axes: transversal = volume axis i, coronal = axis j, sagittal = axis k (k fastest on disk)
# columns: source_id\tplane\tslice_index\timage_path\tmask_path\tsplit
# relative paths are resolved against the manifest's directory
";

pub fn write_manifest<W: Write>(mut w: W, entries: &[ManifestEntry], seed: u64) -> std::io::Result<()> {
    w.write_all(MANIFEST_HEADER.as_bytes())?;
    writeln!(w, "# seed: {seed}")?;
    for e in entries {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.source_id,
            e.plane,
            e.slice_index,
            e.image_path.display(),
            e.mask_path.display(),
            e.split.as_str()
        )?;
    }
    w.flush()
}

/// Parses a manifest. Returns the entries and the seed recorded in the
/// header (0 when absent).
pub fn read_manifest(text: &str) -> Result<(Vec<ManifestEntry>, u64)> {
    let mut seed = 0;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let bad = |reason: String| Error::MalformedManifest { line: line_no, reason };
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(s) = comment.trim().strip_prefix("seed:") {
                seed = s.trim().parse().map_err(|_| bad(format!("bad seed {s:?}")))?;
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 tab-separated columns, found {}", cols.len())));
        }
        let plane = cols[1].parse().map_err(|_| bad(format!("unknown plane {:?}", cols[1])))?;
        let slice_index = cols[2].parse().map_err(|_| bad(format!("bad slice index {:?}", cols[2])))?;
        let split = match cols[5] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(bad(format!("unknown split {other:?}"))),
        };
        out.push(ManifestEntry {
            source_id: cols[0].to_string(),
            plane,
            slice_index,
            image_path: PathBuf::from(cols[3]),
            mask_path: PathBuf::from(cols[4]),
            split,
        });
    }
    Ok((out, seed))
}

impl SliceDataset {
    /// Loads a manifest file and the rasters it references.
    pub fn load(manifest: &Path) -> Result<SliceDataset> {
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let (entries, seed) = read_manifest(&text)?;
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let base = manifest.parent().unwrap_or(Path::new(""));
        let mut items = Vec::with_capacity(entries.len());
        let mut split = Vec::with_capacity(entries.len());
        for e in entries {
            let meta = |mut img: SliceImage| {
                img.plane = e.plane;
                img.source_id = e.source_id.clone();
                img.slice_index = e.slice_index;
                img
            };
            let image = meta(read_raster(&base.join(&e.image_path))?);
            let mask = meta(read_raster(&base.join(&e.mask_path))?);
            if (image.height, image.width) != (mask.height, mask.width) {
                return Err(Error::DimMismatch(format!(
                    "{}: image {}x{} vs mask {}x{}",
                    e.image_path.display(),
                    image.height,
                    image.width,
                    mask.height,
                    mask.width
                )));
            }
            if let Some(index) = mask.pixels.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinaryMask {
                    index,
                    value: mask.pixels[index],
                });
            }
            items.push(SlicePair { image, mask });
            split.push(e.split);
        }
        Ok(SliceDataset { items, split, seed })
    }
}

/// Writes every pair as PGM rasters under `dir/images` and `dir/masks` plus
/// a manifest at `dir/manifest_name`. Returns the manifest path.
pub fn write_dataset(ds: &SliceDataset, dir: &Path, manifest_name: &str) -> Result<PathBuf> {
    for sub in ["images", "masks"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(ds.len());
    for (p, &split) in ds.items.iter().zip(&ds.split) {
        let stem = format!("{}_{}_{:04}.pgm", p.image.source_id, p.image.plane, p.image.slice_index);
        let image_path = Path::new("images").join(&stem);
        let mask_path = Path::new("masks").join(&stem);
        write_raster(&p.image, &dir.join(&image_path))?;
        write_raster(&p.mask, &dir.join(&mask_path))?;
        entries.push(ManifestEntry {
            source_id: p.image.source_id.clone(),
            plane: p.image.plane,
            slice_index: p.image.slice_index,
            image_path,
            mask_path,
            split,
        });
    }
    let path = dir.join(manifest_name);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_manifest(std::io::BufWriter::new(file), &entries, ds.seed).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, idx: usize, fg: bool) -> SlicePair {
        let mut image = SliceImage::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        image.source_id = id.into();
        image.slice_index = idx;
        let mut mask = image.with_pixels(2, 2, vec![0.0; 4]);
        if fg {
            mask.pixels[3] = 1.0;
        }
        SlicePair { image, mask }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<_> = (0..846).map(|i| pair("a", i, false)).collect();
        let a = split_dataset(items.clone(), 0.10, 3).unwrap();
        assert_eq!(a.count(Split::Test), 85);
        let b = split_dataset(items.clone(), 0.10, 3).unwrap();
        assert_eq!(a.split, b.split);
        let ten = split_dataset(items[..10].to_vec(), 0.10, 3).unwrap();
        assert_eq!(ten.count(Split::Test), 1);
        assert!(matches!(split_dataset(vec![], 0.1, 0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn filters() {
        let items = vec![pair("1", 0, true), pair("13", 0, true), pair("2", 0, false)];
        assert_eq!(exclude_sources(items.clone(), &["13".into()]).len(), 2);
        assert_eq!(drop_empty_masks(items).len(), 2);
    }

    #[test]
    fn manifest_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let items = (0..5).map(|i| pair("p7", i, i % 2 == 0)).collect();
        let ds = split_dataset(items, 0.2, 11).unwrap();
        let path = write_dataset(&ds, dir.path(), "full.tsv").unwrap();
        let back = SliceDataset::load(&path).unwrap();
        assert_eq!(back.split, ds.split);
        assert_eq!(back.seed, 11);
        assert_eq!(back.items[2].mask.pixels, ds.items[2].mask.pixels);
        assert_eq!(back.items[4].image.pixels[1], ((0.25f64 * 255.0).round() / 255.0) as f32);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let err = read_manifest("# c\na\tcoronal\t0\ti\tm\ttrain\nb\tup\t0\ti\tm\ttrain\n").unwrap_err();
        assert!(matches!(err, Error::MalformedManifest { line: 3, .. }));
    }
}
