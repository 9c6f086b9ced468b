//! Median filter, Otsu or fixed thresholding, then binary opening and
//! closing with disk structuring elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::SliceImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Otsu,
    Fixed(f32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub median_kernel: usize,
    pub mode: ThresholdMode,
    pub morph_open_radius: usize,
    pub morph_close_radius: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            median_kernel: 3,
            mode: ThresholdMode::Otsu,
            morph_open_radius: 1,
            morph_close_radius: 1,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_kernel == 0 || self.median_kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "median kernel must be odd and positive, got {}",
                self.median_kernel
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdOutcome {
    pub mask: SliceImage,
    /// Intensity level used; foreground is strictly above it.
    pub level: Option<f32>,
    /// Otsu found a single occupied histogram bin; the mask is all background.
    pub constant_image: bool,
}

/// Median over a `k x k` window with replicated borders.
pub fn median_filter(img: &SliceImage, k: usize) -> SliceImage {
    if k <= 1 {
        return img.clone();
    }
    let r = (k / 2) as isize;
    let (h, w) = (img.height as isize, img.width as isize);
    let mut win = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            win.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    win.push(img.at(yy, xx));
                }
            }
            let mid = win.len() / 2;
            let (_, m, _) = win.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.push(*m);
        }
    }
    img.with_pixels(img.height, img.width, out)
}

#[inline]
pub fn intensity_bin(p: f32) -> usize {
    (p.clamp(0.0, 1.0) as f64 * 255.0).round() as usize
}

pub fn histogram256(pixels: &[f32]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in pixels {
        h[intensity_bin(p)] += 1;
    }
    h
}

/// Otsu threshold bin `t` (foreground is `bin > t`) maximizing the
/// between-class variance, ties toward the lower `t`. `None` when fewer
/// than two bins are occupied.
///
/// Between-class variance is proportional to `(n0 s1 - n1 s0)^2 / (n0 n1)`,
/// compared exactly in integers where it fits and in `f64` otherwise.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let sum: u128 = hist.iter().enumerate().map(|(b, &c)| b as u128 * c as u128).sum();
    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0u64, 0u128);
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = sum - s0;
        let (a, b) = (n0 as u128 * s1, n1 as u128 * s0);
        let diff = a.abs_diff(b);
        let num = diff * diff;
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => greater_ratio(num, den, bn, bd),
        };
        if better {
            best = Some((t, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// `a / b > c / d` for positive denominators.
fn greater_ratio(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64) / (b as f64) > (c as f64) / (d as f64),
    }
}

/// Binary erosion (`dilate = false`) or dilation with a disk of radius `r`.
/// Out-of-image positions are ignored.
fn morph(px: &[f32], h: usize, w: usize, r: usize, dilate: bool) -> Vec<f32> {
    if r == 0 {
        return px.to_vec();
    }
    let ri = r as isize;
    let offsets: Vec<(isize, isize)> = (-ri..=ri)
        .flat_map(|dy| (-ri..=ri).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= ri * ri)
        .collect();
    let mut out = vec![0.0; px.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut hit = !dilate;
            for &(dy, dx) in &offsets {
                let (yy, xx) = (y + dy, x + dx);
                if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                    continue;
                }
                let on = px[yy as usize * w + xx as usize] > 0.5;
                if dilate && on {
                    hit = true;
                    break;
                }
                if !dilate && !on {
                    hit = false;
                    break;
                }
            }
            out[y as usize * w + x as usize] = if hit { 1.0 } else { 0.0 };
        }
    }
    out
}

pub fn opening(px: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    morph(&morph(px, h, w, r, false), h, w, r, true)
}

pub fn closing(px: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    morph(&morph(px, h, w, r, true), h, w, r, false)
}

pub fn threshold_segment(img: &SliceImage, cfg: &ThresholdConfig) -> Result<ThresholdOutcome> {
    cfg.validate()?;
    let filtered = median_filter(img, cfg.median_kernel);
    let (h, w) = (img.height, img.width);
    let (raw, level, constant_image) = match cfg.mode {
        ThresholdMode::Fixed(level) => {
            let m = filtered.pixels.iter().map(|&p| if p > level { 1.0 } else { 0.0 }).collect();
            (m, Some(level), false)
        }
        ThresholdMode::Otsu => match otsu_threshold(&histogram256(&filtered.pixels)) {
            Some(t) => {
                let m = filtered
                    .pixels
                    .iter()
                    .map(|&p| if intensity_bin(p) > t { 1.0 } else { 0.0 })
                    .collect();
                (m, Some(t as f32 / 255.0), false)
            }
            None => (vec![0.0; h * w], None, true),
        },
    };
    let opened = opening(&raw, h, w, cfg.morph_open_radius);
    let closed = closing(&opened, h, w, cfg.morph_close_radius);
    Ok(ThresholdOutcome {
        mask: img.with_pixels(h, w, closed),
        level,
        constant_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, px: Vec<f32>) -> SliceImage {
        SliceImage::new(h, w, px).unwrap()
    }

    #[test]
    fn otsu_splits_zeros_from_ones() {
        let t = otsu_threshold(&histogram256(&[0.0, 0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(t, 0);
        let cfg = ThresholdConfig {
            median_kernel: 1,
            morph_open_radius: 0,
            morph_close_radius: 0,
            ..Default::default()
        };
        let out = threshold_segment(&img(1, 5, vec![0.0, 0.0, 0.0, 1.0, 1.0]), &cfg).unwrap();
        assert_eq!(out.mask.pixels, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn fixed_level_on_binary_is_identity() {
        let px = vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let cfg = ThresholdConfig {
            median_kernel: 1,
            mode: ThresholdMode::Fixed(0.5),
            morph_open_radius: 0,
            morph_close_radius: 0,
        };
        assert_eq!(threshold_segment(&img(2, 3, px.clone()), &cfg).unwrap().mask.pixels, px);
    }

    #[test]
    fn constant_image_is_flagged() {
        let out = threshold_segment(&img(3, 3, vec![0.4; 9]), &ThresholdConfig::default()).unwrap();
        assert!(out.constant_image);
        assert_eq!(out.mask.foreground_count(), 0);
    }

    #[test]
    fn median_removes_salt() {
        let mut px = vec![0.0; 25];
        px[12] = 1.0;
        let m = median_filter(&img(5, 5, px), 3);
        assert!(m.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn opening_removes_specks_closing_fills_holes() {
        let mut px = vec![0.0; 49];
        px[0] = 1.0;
        assert!(opening(&px, 7, 7, 1).iter().all(|&p| p == 0.0));
        let mut block = vec![1.0; 49];
        block[24] = 0.0;
        assert!(closing(&block, 7, 7, 1).iter().all(|&p| p == 1.0));
    }

    #[test]
    fn even_kernel_rejected() {
        let cfg = ThresholdConfig {
            median_kernel: 4,
            ..Default::default()
        };
        assert!(threshold_segment(&img(2, 2, vec![0.0; 4]), &cfg).is_err());
    }
}
