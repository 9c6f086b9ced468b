mod common;

use common::{non_increasing, otsu_oracle, rng};
use lunet::baselines::*;
use lunet::volume::SliceImage;
use proptest::prelude::*;
use rand::Rng;

fn in_disc(i: usize) -> bool {
    (i / 24).abs_diff(12).pow(2) + (i % 24).abs_diff(12).pow(2) < 30
}

fn noisy_two_tone(seed: u64) -> SliceImage {
    let mut rg = rng(seed);
    let px = (0..24 * 24)
        .map(|i| {
            let base = if in_disc(i) { 0.8 } else { 0.2 };
            (base + rg.gen_range(-0.1..0.1f32)).clamp(0.0, 1.0)
        })
        .collect();
    SliceImage::new(24, 24, px).unwrap()
}

#[test]
fn otsu_agrees_with_exhaustive_search() {
    let mut rg = rng(3);
    for _ in 0..200 {
        let mut hist = [0u64; 256];
        for _ in 0..rg.gen_range(1..20) {
            hist[rg.gen_range(0..256)] += rg.gen_range(1..50);
        }
        assert_eq!(otsu_threshold(&hist), otsu_oracle(&hist));
    }
}

#[test]
fn otsu_separates_three_zeros_from_two_ones() {
    let img = SliceImage::new(1, 5, vec![0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
    let cfg = ThresholdConfig { median_kernel: 1, morph_open_radius: 0, morph_close_radius: 0, ..Default::default() };
    let out = threshold_segment(&img, &cfg).unwrap();
    assert_eq!(out.mask.pixels, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn every_method_finds_the_bright_disc() {
    let img = noisy_two_tone(1);
    let truth: Vec<f32> = (0..24 * 24)
        .map(|i| in_disc(i) as u8 as f32)
        .collect();
    let cfg = ClusterConfig::default();
    let masks = [
        threshold_segment(&img, &ThresholdConfig::default()).unwrap().mask,
        kmeans_segment(&img, &cfg).unwrap().mask,
        fuzzy_cmeans_segment(&img, &cfg).unwrap().mask,
    ];
    for m in masks {
        let wrong = m.pixels.iter().zip(&truth).filter(|(a, b)| a != b).count();
        assert!(wrong <= 8, "{wrong} pixels wrong");
    }
}

#[test]
fn constant_images_give_empty_masks() {
    let img = SliceImage::new(4, 4, vec![0.3; 16]).unwrap();
    let t = threshold_segment(&img, &ThresholdConfig::default()).unwrap();
    assert!(t.constant_image && t.mask.foreground_count() == 0);
    for out in [
        kmeans_segment(&img, &ClusterConfig::default()).unwrap(),
        fuzzy_cmeans_segment(&img, &ClusterConfig::default()).unwrap(),
    ] {
        assert!(out.degenerate && out.mask.foreground_count() == 0);
    }
}

#[test]
fn segmentation_objectives_never_rise() {
    for seed in 0..20 {
        let img = noisy_two_tone(seed);
        for k in 2..=4 {
            let cfg = ClusterConfig { k, seed, tol: 0.0, ..Default::default() };
            for out in [kmeans_segment(&img, &cfg).unwrap(), fuzzy_cmeans_segment(&img, &cfg).unwrap()] {
                assert!(out.objective_history.windows(2).all(|w| non_increasing(w[0], w[1])));
                assert!(out.iterations <= cfg.max_iters);
            }
        }
    }
}

#[test]
fn brightest_cluster_is_foreground() {
    let img = SliceImage::new(1, 6, vec![0.1, 0.1, 0.5, 0.5, 0.9, 0.9]).unwrap();
    let cfg = ClusterConfig { k: 3, ..Default::default() };
    for out in [kmeans_segment(&img, &cfg).unwrap(), fuzzy_cmeans_segment(&img, &cfg).unwrap()] {
        assert_eq!(out.mask.pixels, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }
}

proptest! {
    #[test]
    fn fcm_memberships_sum_to_one(
        centers in prop::collection::vec(-2.0f64..2.0, 2..6), v in -3.0f64..3.0, m in 1.2f64..4.0,
    ) {
        let mut u = vec![0.0; centers.len()];
        memberships(&centers, v, m, &mut u);
        prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(u.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn coincident_pixel_belongs_wholly_to_its_center(centers in prop::collection::vec(-2.0f64..2.0, 2..6), pick in 0usize..6) {
        let c = pick % centers.len();
        prop_assume!(centers.iter().enumerate().all(|(i, &x)| i == c || x != centers[c]));
        let mut u = vec![0.0; centers.len()];
        memberships(&centers, centers[c], 2.0, &mut u);
        for (i, &x) in u.iter().enumerate() {
            prop_assert_eq!(x, if i == c { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn clustering_objectives_never_rise(values in prop::collection::vec(0.0f64..1.0, 3..80), k in 2usize..5, seed in any::<u64>()) {
        let km = kmeans_1d(&values, k, 50, 0.0, seed);
        prop_assert!(km.objective_history.windows(2).all(|w| non_increasing(w[0], w[1])));
        let fc = fcm_1d(&values, k, 2.0, 50, 0.0, seed);
        prop_assert!(fc.objective_history.windows(2).all(|w| non_increasing(w[0], w[1])));
    }
}
