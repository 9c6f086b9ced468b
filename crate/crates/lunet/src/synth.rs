//! Synthetic head phantoms: a dark brain ellipsoid inside a bright skull
//! shell, with bright axis-aligned ellipsoidal tumors and Gaussian noise.
//!
//! The skull shell is roughly as bright as the tumors, so a global intensity
//! threshold cannot separate the two; shape and position have to be used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{SliceImage, SlicePair, Volume};

const BRAIN_LEVEL: f64 = 0.35;
/// Brain and skull semi-axes as fractions of each dimension.
const BRAIN_FRAC: f64 = 0.36;
const SKULL_FRAC: f64 = 0.44;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_volumes: usize,
    pub dims: (usize, usize, usize),
    /// Inclusive range of tumors per volume.
    pub tumors: (usize, usize),
    /// Inclusive range of ellipsoid semi-axes in voxels.
    pub axes: (f64, f64),
    pub contrast: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_volumes: 2,
            dims: (64, 64, 64),
            tumors: (1, 3),
            axes: (3.0, 8.0),
            contrast: 0.45,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

/// Axis-aligned ellipsoid in voxel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub axes: [f64; 3],
}

impl Ellipsoid {
    pub fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.axes[a]).powi(2)).sum()
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        self.level([i as f64, j as f64, k as f64]) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVolume {
    pub id: String,
    pub volume: Volume,
    pub mask: Volume,
    pub tumors: Vec<Ellipsoid>,
}

impl SyntheticSpec {
    fn dims3(&self) -> [usize; 3] {
        [self.dims.0, self.dims.1, self.dims.2]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_volumes == 0 {
            return bad("n_volumes must be positive".into());
        }
        let d = self.dims3();
        if d.iter().any(|&v| v < 8) {
            return bad(format!("dims {:?} must be at least 8 along every axis", self.dims));
        }
        if self.tumors.0 > self.tumors.1 {
            return bad(format!("tumor range {:?} is empty", self.tumors));
        }
        if !(self.axes.0 > 0.0 && self.axes.0 <= self.axes.1) {
            return bad(format!("axes range {:?} is invalid", self.axes));
        }
        let min_brain = d.iter().map(|&v| BRAIN_FRAC * v as f64).fold(f64::INFINITY, f64::min);
        if self.axes.1 * 2.0 > min_brain {
            return bad(format!(
                "largest semi-axis {} does not fit inside the brain (semi-axis {min_brain:.1})",
                self.axes.1
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        if !(self.contrast > 0.0 && self.contrast > self.noise_sigma) {
            return bad(format!(
                "contrast {} must be positive and exceed the noise sigma {}",
                self.contrast, self.noise_sigma
            ));
        }
        Ok(())
    }

    /// Generates all volumes. Volume `v` uses its own stream derived from
    /// `seed`, so volumes do not depend on `n_volumes`.
    pub fn generate(&self) -> Result<Vec<SyntheticVolume>> {
        self.validate()?;
        (0..self.n_volumes).map(|v| self.generate_one(v)).collect()
    }

    pub fn generate_one(&self, index: usize) -> Result<SyntheticVolume> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        let d = self.dims3();
        let mid = d.map(|v| (v as f64 - 1.0) / 2.0);
        let brain = Ellipsoid {
            center: mid,
            axes: d.map(|v| BRAIN_FRAC * v as f64),
        };
        let skull = Ellipsoid {
            center: mid,
            axes: d.map(|v| SKULL_FRAC * v as f64),
        };
        let n_tumors = rng.gen_range(self.tumors.0..=self.tumors.1);
        let mut tumors = Vec::with_capacity(n_tumors);
        for _ in 0..n_tumors {
            let axes = [0; 3].map(|_| rng.gen_range(self.axes.0..=self.axes.1));
            // centre offsets keep the whole ellipsoid within the brain
            let center = [0, 1, 2].map(|a| {
                let room = brain.axes[a] - axes[a] - 1.0;
                let r = room / 3f64.sqrt();
                mid[a] + rng.gen_range(-r..=r)
            });
            tumors.push(Ellipsoid { center, axes });
        }
        let phase: [f64; 3] = [0; 3].map(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        let noise = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("sigma is finite");
        let n = d[0] * d[1] * d[2];
        let mut voxels = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let p = [i as f64, j as f64, k as f64];
                    let in_tumor = tumors.iter().any(|t| t.level(p) <= 1.0);
                    let b = brain.level(p);
                    let s = skull.level(p);
                    let mut v = if b <= 1.0 {
                        let shade = (0..3)
                            .map(|a| (p[a] / d[a] as f64 * 3.0 + phase[a]).sin())
                            .sum::<f64>();
                        BRAIN_LEVEL + 0.02 * shade
                    } else if s <= 1.0 {
                        BRAIN_LEVEL + 0.9 * self.contrast
                    } else {
                        0.0
                    };
                    if in_tumor {
                        v = BRAIN_LEVEL + self.contrast;
                    }
                    if self.noise_sigma > 0.0 && s <= 1.0 {
                        v += noise.sample(&mut rng);
                    }
                    voxels.push(v as f32);
                    mask.push(if in_tumor { 1.0 } else { 0.0 });
                }
            }
        }
        let id = format!("syn{:03}", index + 1);
        Ok(SyntheticVolume {
            id,
            volume: Volume::new(d, voxels, [1.0; 3])?,
            mask: Volume::new(d, mask, [1.0; 3])?,
            tumors,
        })
    }
}

/// 2D phantom slices of size `h x w`: one elliptical tumor (sometimes two)
/// inside a brain disk ringed by a bright skull.
pub fn ellipse_slices(n: usize, h: usize, w: usize, contrast: f64, noise_sigma: f64, seed: u64) -> Result<Vec<SlicePair>> {
    if h < 8 || w < 8 {
        return Err(Error::InvalidSpec(format!("slice size {h}x{w} is below 8x8")));
    }
    if !(contrast > 0.0 && contrast > noise_sigma && noise_sigma >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "contrast {contrast} must be positive and exceed the noise sigma {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("sigma is finite");
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (by, bx) = (BRAIN_FRAC * h as f64, BRAIN_FRAC * w as f64);
    let (sy, sx) = (SKULL_FRAC * h as f64, SKULL_FRAC * w as f64);
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let count = if rng.gen_bool(0.3) { 2 } else { 1 };
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let ay = rng.gen_range(0.08..0.2) * h as f64;
            let ax = rng.gen_range(0.08..0.2) * w as f64;
            let ry = (by - ay - 1.0).max(0.0) / 2f64.sqrt();
            let rx = (bx - ax - 1.0).max(0.0) / 2f64.sqrt();
            blobs.push((cy + rng.gen_range(-ry..=ry), cx + rng.gen_range(-rx..=rx), ay, ax));
        }
        let mut img = Vec::with_capacity(h * w);
        let mut mask = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (fy, fx) = (y as f64, x as f64);
                let lvl = |c0: f64, c1: f64, a0: f64, a1: f64| ((fy - c0) / a0).powi(2) + ((fx - c1) / a1).powi(2);
                let tumor = blobs.iter().any(|&(c0, c1, a0, a1)| lvl(c0, c1, a0, a1) <= 1.0);
                let in_skull = lvl(cy, cx, sy, sx) <= 1.0;
                let mut v = if lvl(cy, cx, by, bx) <= 1.0 {
                    BRAIN_LEVEL
                } else if in_skull {
                    BRAIN_LEVEL + 0.9 * contrast
                } else {
                    0.0
                };
                if tumor {
                    v = BRAIN_LEVEL + contrast;
                }
                if noise_sigma > 0.0 && in_skull {
                    v += noise.sample(&mut rng);
                }
                img.push(v as f32);
                mask.push(if tumor { 1.0 } else { 0.0 });
            }
        }
        crate::volume::normalize_min_max(&mut img);
        let mut image = SliceImage::new(h, w, img)?;
        image.source_id = "ellipse".into();
        image.slice_index = s;
        let mask = image.with_pixels(h, w, mask);
        out.push(SlicePair { image, mask });
    }
    Ok(out)
}
