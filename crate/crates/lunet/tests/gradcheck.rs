mod common;

use common::*;
use lunet::Mode;

const SEEDS: std::ops::Range<u64> = 0..3;

fn assert_all<T: lunet::Real>() {
    let tol = tolerance::<T>();
    for r in gradient_suite::<T>(SEEDS) {
        assert!(r.worst < tol, "{}: relative error {:e} >= {tol:e}", r.name, r.worst);
        assert!(r.kinks * 10 <= r.checked, "{}: {} kinks", r.name, r.kinks);
    }
}

#[test]
fn all_layers_and_models_f64() {
    assert_all::<f64>();
}

#[test]
fn all_layers_and_models_f32() {
    assert_all::<f32>();
}

#[test]
fn batchnorm_eval_mode_is_affine() {
    // central differences of an affine map carry only rounding error
    for s in SEEDS {
        assert!(check_batchnorm::<f64>(s, Mode::Eval) < 1e-8);
    }
}

#[test]
fn a_wrong_gradient_is_detected() {
    let mut rg = rng(3);
    let x = rand_tensor::<f64>(&mut rg, &[1, 1, 4, 4], -1.0, 1.0);
    let r: Vec<f64> = (0..16).map(|i| i as f64 / 16.0 - 0.5).collect();
    let num = numeric_grads(std::slice::from_ref(&x), &r, |i| i[0].map(|v| v * v));
    let right: Vec<f64> = x.data().iter().zip(&r).map(|(v, w)| 2.0 * v * w).collect();
    assert!(worst_rel_err(&[(right.clone(), num[0].clone())]) < 1e-8);
    let mut wrong = right;
    wrong[5] += 0.1;
    assert!(worst_rel_err(&[(wrong, num[0].clone())]) > 1e-3);
}

#[test]
fn zero_gradients_use_the_floor() {
    let pairs = vec![(vec![1.0, 2.0], vec![1.0, 2.0]), (vec![0.0; 3], vec![1e-12, -1e-12, 0.0])];
    assert!(worst_rel_err(&pairs) < 1e-9);
}
