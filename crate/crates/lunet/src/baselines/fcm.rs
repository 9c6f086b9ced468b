//! Fuzzy c-means on pixel intensities.

use super::kmeans::{brightest, distinct_count, plus_plus_init, ClusterConfig, ClusterOutcome};
use crate::error::Result;
use crate::volume::SliceImage;

/// Memberships of `v` in each cluster, summing to 1. A value coinciding
/// with a center belongs fully to the first such center.
pub fn memberships(centers: &[f64], v: f64, m: f64, out: &mut [f64]) {
    let d2: Vec<f64> = centers.iter().map(|&c| (v - c).powi(2)).collect();
    if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
        out.fill(0.0);
        out[hit] = 1.0;
        return;
    }
    let e = 1.0 / (m - 1.0);
    let w: Vec<f64> = d2.iter().map(|&d| (1.0 / d).powf(e)).collect();
    let s: f64 = w.iter().sum();
    for (o, wi) in out.iter_mut().zip(&w) {
        *o = wi / s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcmFit {
    pub centers: Vec<f64>,
    /// Row-major `[pixel][cluster]`.
    pub u: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

pub fn fcm_1d(values: &[f64], k: usize, m: f64, max_iters: usize, tol: f64, seed: u64) -> FcmFit {
    let mut centers = plus_plus_init(values, k, seed);
    let mut u = vec![0.0; values.len() * k];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut obj = 0.0;
        let mut num = vec![0.0; k];
        let mut den = vec![0.0; k];
        for (row, &v) in u.chunks_exact_mut(k).zip(values) {
            memberships(&centers, v, m, row);
            for c in 0..k {
                let um = row[c].powf(m);
                obj += um * (v - centers[c]).powi(2);
                num[c] += um * v;
                den[c] += um;
            }
        }
        history.push(obj);
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if den[c] > 0.0 {
                let nc = num[c] / den[c];
                shift = shift.max((nc - centers[c]).abs());
                centers[c] = nc;
            }
        }
        if shift < tol {
            break;
        }
    }
    for (row, &v) in u.chunks_exact_mut(k).zip(values) {
        memberships(&centers, v, m, row);
    }
    FcmFit {
        centers,
        u,
        objective_history: history,
        iterations,
    }
}

/// Defuzzified by maximum membership (ties to the lower index); foreground
/// is the brightest cluster.
pub fn fuzzy_cmeans_segment(img: &SliceImage, cfg: &ClusterConfig) -> Result<ClusterOutcome> {
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
    let k = distinct;
    let fit = fcm_1d(&values, k, cfg.m, cfg.max_iters, cfg.tol, cfg.seed);
    let fg = brightest(&fit.centers);
    let mask = fit
        .u
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best == fg {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(ClusterOutcome {
        mask: img.with_pixels(h, w, mask),
        centers: fit.centers,
        objective_history: fit.objective_history,
        iterations: fit.iterations,
        degenerate: distinct < cfg.k,
    })
}
