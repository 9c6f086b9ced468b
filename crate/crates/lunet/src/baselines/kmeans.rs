//! One-dimensional k-means on pixel intensities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::SliceImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Fuzzifier, used by fuzzy c-means only.
    pub m: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 2,
            max_iters: 100,
            tol: 1e-6,
            m: 2.0,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.m > 1.0) {
            return Err(Error::InvalidConfig(format!("fuzzifier must exceed 1, got {}", self.m)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOutcome {
    pub mask: SliceImage,
    pub centers: Vec<f64>,
    /// Objective after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    /// Fewer distinct intensities than requested clusters.
    pub degenerate: bool,
}

pub(crate) fn distinct_count(values: &[f64], limit: usize) -> usize {
    let mut seen: Vec<f64> = Vec::with_capacity(limit);
    for &v in values {
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// k-means++ seeding: first center uniform, later ones proportional to the
/// squared distance to the nearest chosen center.
pub(crate) fn plus_plus_init(values: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![values[rng.gen_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|&v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = values.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            while d2[idx] == 0.0 {
                idx -= 1;
            }
            idx
        } else {
            0
        };
        let c = values[pick];
        centers.push(c);
        for (d, &v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).powi(2));
        }
    }
    centers
}

/// Index of the center nearest to `v`, ties to the lower index.
pub(crate) fn nearest(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = (v - c).powi(2);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

pub(crate) fn brightest(centers: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in centers.iter().enumerate() {
        if c > centers[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<f64>,
    pub labels: Vec<usize>,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd iterations from a k-means++ start. `values` must hold at least `k`
/// distinct entries.
pub fn kmeans_1d(values: &[f64], k: usize, max_iters: usize, tol: f64, seed: u64) -> KMeansFit {
    let mut centers = plus_plus_init(values, k, seed);
    let mut labels = vec![0; values.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut obj = 0.0;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (l, &v) in labels.iter_mut().zip(values) {
            *l = nearest(&centers, v);
            obj += (v - centers[*l]).powi(2);
            sums[*l] += v;
            counts[*l] += 1;
        }
        history.push(obj);
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] > 0 {
                let nc = sums[c] / counts[c] as f64;
                shift = shift.max((nc - centers[c]).abs());
                centers[c] = nc;
            }
        }
        if shift < tol {
            break;
        }
    }
    // final assignment against the last centers
    for (l, &v) in labels.iter_mut().zip(values) {
        *l = nearest(&centers, v);
    }
    KMeansFit {
        centers,
        labels,
        objective_history: history,
        iterations,
    }
}

/// Foreground is the cluster with the brightest center.
pub fn kmeans_segment(img: &SliceImage, cfg: &ClusterConfig) -> Result<ClusterOutcome> {
    cfg.validate()?;
    let values: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    let distinct = distinct_count(&values, cfg.k);
    let (h, w) = (img.height, img.width);
    if distinct < 2 {
        return Ok(ClusterOutcome {
            mask: img.with_pixels(h, w, vec![0.0; h * w]),
            centers: values.first().copied().into_iter().collect(),
            objective_history: vec![0.0],
            iterations: 0,
            degenerate: true,
        });
    }
    let fit = kmeans_1d(&values, distinct, cfg.max_iters, cfg.tol, cfg.seed);
    let fg = brightest(&fit.centers);
    let mask = fit.labels.iter().map(|&l| if l == fg { 1.0 } else { 0.0 }).collect();
    Ok(ClusterOutcome {
        mask: img.with_pixels(h, w, mask),
        centers: fit.centers,
        objective_history: fit.objective_history,
        iterations: fit.iterations,
        degenerate: distinct < cfg.k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_intensities() {
        let img = SliceImage::new(1, 4, vec![0.0, 0.1, 0.9, 1.0]).unwrap();
        for seed in 0..10 {
            let out = kmeans_segment(&img, &ClusterConfig { seed, ..Default::default() }).unwrap();
            let mut c = out.centers.clone();
            c.sort_by(f64::total_cmp);
            assert!((c[0] - 0.05).abs() < 1e-7 && (c[1] - 0.95).abs() < 1e-7, "{c:?}");
            assert_eq!(out.mask.pixels, vec![0.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn binary_image_recovered() {
        let px: Vec<f32> = (0..30).map(|i| ((i * 7) % 3 == 0) as u8 as f32).collect();
        let img = SliceImage::new(5, 6, px.clone()).unwrap();
        assert_eq!(kmeans_segment(&img, &ClusterConfig::default()).unwrap().mask.pixels, px);
    }

    #[test]
    fn constant_image_all_background() {
        let img = SliceImage::new(2, 2, vec![0.3; 4]).unwrap();
        let out = kmeans_segment(&img, &ClusterConfig::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.mask.foreground_count(), 0);
    }

    #[test]
    fn degenerate_k_merges() {
        let img = SliceImage::new(1, 4, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = kmeans_segment(&img, &ClusterConfig { k: 3, ..Default::default() }).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.centers.len(), 2);
        assert_eq!(out.mask.pixels, vec![0.0, 0.0, 1.0, 1.0]);
    }
}
