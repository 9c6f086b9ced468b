#![allow(dead_code)]

//! Central finite-difference gradient checks shared by the test targets.
//!
//! Every check uses the scalar `L = sum(r * f(inputs))` for a fixed random
//! `r`, so `dL/d out = r`. Errors are reported per gradient vector as
//! `|a - n| / max(|a|, |n|, 1e-3 * G)` with `G` the norm of all analytic
//! gradients in the check; the floor keeps exactly-zero gradients (a bias
//! feeding a batch norm) from dividing noise by noise.

use lunet::baselines::{LinkNetConfig, LinkNetLite};
use lunet::nn::*;
use lunet::trainer::bce_loss;
use lunet::{Mode, Real, SegmentationModel, Tensor, UNet, UNetConfig, UpsampleMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor<T: Real>(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64(r.gen_range(lo..hi)))
}

/// Values whose magnitude is at least `gap`, so kinks at 0 are not crossed.
pub fn away_from_zero<T: Real>(r: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let m = r.gen_range(gap..1.0);
        T::from_f64(if r.gen_bool(0.5) { m } else { -m })
    })
}

/// A shuffled grid of distinct values spaced `spacing` apart.
pub fn distinct_values<T: Real>(r: &mut ChaCha8Rng, shape: &[usize], spacing: f64) -> Tensor<T> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * spacing).collect();
    v.shuffle(r);
    Tensor::new(shape, v.into_iter().map(T::from_f64).collect()).unwrap()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Worst relative error over the paired analytic/numeric vectors.
pub fn worst_rel_err(pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let g = norm(pairs.iter().flat_map(|(a, _)| a.iter().copied()));
    let floor = (1e-3 * g).max(1e-12);
    pairs
        .iter()
        .map(|(a, n)| {
            let d = norm(a.iter().zip(n).map(|(x, y)| x - y));
            let s = norm(a.iter().copied()).max(norm(n.iter().copied())).max(floor);
            d / s
        })
        .fold(0.0, f64::max)
}

fn weighted<T: Real>(r: &[f64], out: &Tensor<T>) -> f64 {
    out.data().iter().zip(r).map(|(o, w)| o.to_f64() * w).sum()
}

/// Numeric gradients of `L` with respect to every entry of every input,
/// evaluated in `f64` whatever precision the analytic side ran in.
pub fn numeric_grads(inputs: &[Tensor<f64>], r: &[f64], mut f: impl FnMut(&[Tensor<f64>]) -> Tensor<f64>) -> Vec<Vec<f64>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[t].len());
        for e in 0..inputs[t].len() {
            let orig = work[t].data()[e];
            work[t].data_mut()[e] = orig + EPS;
            let plus = weighted(r, &f(&work));
            work[t].data_mut()[e] = orig - EPS;
            let minus = weighted(r, &f(&work));
            work[t].data_mut()[e] = orig;
            g.push((plus - minus) / (2.0 * EPS));
        }
        out.push(g);
    }
    out
}

pub const EPS: f64 = 1e-6;



pub fn to_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64()).collect()
}

pub fn tolerance<T: Real>() -> f64 {
    if std::mem::size_of::<T>() == 8 {
        1e-5
    } else {
        1e-3
    }
}

fn r_for<T: Real>(rg: &mut ChaCha8Rng, shape: &[usize]) -> (Vec<f64>, Tensor<T>) {
    let r: Vec<f64> = (0..shape.iter().product()).map(|_| rg.gen_range(-1.0..1.0)).collect();
    let rt = Tensor::new(shape, r.iter().map(|&v| T::from_f64(v)).collect()).unwrap();
    (r, rt)
}

fn wide<T: Real>(ts: &[&Tensor<T>]) -> Vec<Tensor<f64>> {
    ts.iter().map(|t| t.cast::<f64>()).collect()
}

pub fn check_conv<T: Real>(seed: u64, k: usize) -> f64 {
    let mut rg = rng(seed);
    let pad = k / 2;
    let x = rand_tensor::<T>(&mut rg, &[2, 3, 5, 5], -1.0, 1.0);
    let w = rand_tensor::<T>(&mut rg, &[2, 3, k, k], -0.5, 0.5);
    let b = rand_tensor::<T>(&mut rg, &[2], -0.5, 0.5);
    let (r, rt) = r_for::<T>(&mut rg, &[2, 2, 5, 5]);
    let g = conv2d_backward(&rt, &x, &w, pad).unwrap();
    let num = numeric_grads(&wide(&[&x, &w, &b]), &r, |i| conv2d_forward(&i[0], &i[1], &i[2], pad).unwrap());
    worst_rel_err(&[
        (to_f64(&g.grad_x), num[0].clone()),
        (g.grad_w, num[1].clone()),
        (g.grad_b, num[2].clone()),
    ])
}

pub fn check_tconv<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let x = rand_tensor::<T>(&mut rg, &[2, 3, 3, 2], -1.0, 1.0);
    let w = rand_tensor::<T>(&mut rg, &[3, 2, 2, 2], -0.5, 0.5);
    let b = rand_tensor::<T>(&mut rg, &[2], -0.5, 0.5);
    let (r, rt) = r_for::<T>(&mut rg, &[2, 2, 6, 4]);
    let (gx, gw, gb) = tconv2x2_backward(&rt, &x, &w).unwrap();
    let num = numeric_grads(&wide(&[&x, &w, &b]), &r, |i| tconv2x2_forward(&i[0], &i[1], &i[2]).unwrap());
    worst_rel_err(&[(to_f64(&gx), num[0].clone()), (gw, num[1].clone()), (gb, num[2].clone())])
}

pub fn check_batchnorm<T: Real>(seed: u64, mode: Mode) -> f64 {
    let mut rg = rng(seed);
    let shape = [2, 3, 4, 4];
    let x = rand_tensor::<T>(&mut rg, &shape, -2.0, 2.0);
    let mut bn = BatchNorm2d::<T>::new("bn", 3);
    bn.gamma.value = rand_tensor(&mut rg, &[3], 0.5, 1.5);
    bn.beta.value = rand_tensor(&mut rg, &[3], -0.5, 0.5);
    bn.running_mean.value = rand_tensor(&mut rg, &[3], -0.3, 0.3);
    bn.running_var.value = rand_tensor(&mut rg, &[3], 0.5, 1.5);
    let (r, rt) = r_for::<T>(&mut rg, &shape);
    let mut twin = BatchNorm2d::<f64>::new("bn", 3);
    twin.running_mean.value = bn.running_mean.value.cast();
    twin.running_var.value = bn.running_var.value.cast();
    bn.forward(&x, mode).unwrap();
    let gx = bn.backward(&rt).unwrap();
    let num = numeric_grads(&wide(&[&x, &bn.gamma.value, &bn.beta.value]), &r, |i| {
        let mut b = twin.clone();
        b.gamma.value = i[1].clone();
        b.beta.value = i[2].clone();
        b.forward(&i[0], mode).unwrap()
    });
    worst_rel_err(&[
        (to_f64(&gx), num[0].clone()),
        (to_f64(&bn.gamma.grad), num[1].clone()),
        (to_f64(&bn.beta.grad), num[2].clone()),
    ])
}

pub fn check_relu<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let x = away_from_zero::<T>(&mut rg, &[2, 4, 6, 6], 0.05);
    let (r, rt) = r_for::<T>(&mut rg, x.shape());
    let gx = relu_backward(&rt, &x).unwrap();
    let num = numeric_grads(&wide(&[&x]), &r, |i| relu_forward(&i[0]));
    worst_rel_err(&[(to_f64(&gx), num[0].clone())])
}

pub fn check_sigmoid<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let x = rand_tensor::<T>(&mut rg, &[2, 4, 6, 6], -4.0, 4.0);
    let (r, rt) = r_for::<T>(&mut rg, x.shape());
    let y = x.map(sigmoid);
    let gx = sigmoid_backward(&rt, &y).unwrap();
    let num = numeric_grads(&wide(&[&x]), &r, |i| i[0].map(sigmoid));
    worst_rel_err(&[(to_f64(&gx), num[0].clone())])
}

pub fn check_maxpool<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let x = distinct_values::<T>(&mut rg, &[2, 4, 6, 6], 0.05);
    let (y, idx) = maxpool2x2_forward(&x).unwrap();
    let (r, rt) = r_for::<T>(&mut rg, y.shape());
    let gx = maxpool2x2_backward(&rt, &idx, x.shape()).unwrap();
    let num = numeric_grads(&wide(&[&x]), &r, |i| maxpool2x2_forward(&i[0]).unwrap().0);
    worst_rel_err(&[(to_f64(&gx), num[0].clone())])
}

pub fn check_unpool<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let src = distinct_values::<T>(&mut rg, &[2, 3, 6, 4], 0.05);
    let (_, idx) = maxpool2x2_forward(&src).unwrap();
    let x = rand_tensor::<T>(&mut rg, &[2, 3, 3, 2], -1.0, 1.0);
    let (r, rt) = r_for::<T>(&mut rg, src.shape());
    let gx = maxunpool2x2_backward(&rt, &idx, x.shape()).unwrap();
    let num = numeric_grads(&wide(&[&x]), &r, |i| maxunpool2x2(&i[0], &idx, src.shape()).unwrap());
    worst_rel_err(&[(to_f64(&gx), num[0].clone())])
}

pub fn check_concat<T: Real>(seed: u64) -> f64 {
    let mut rg = rng(seed);
    let a = rand_tensor::<T>(&mut rg, &[2, 2, 4, 4], -1.0, 1.0);
    let b = rand_tensor::<T>(&mut rg, &[2, 3, 4, 4], -1.0, 1.0);
    let (r, rt) = r_for::<T>(&mut rg, &[2, 5, 4, 4]);
    let (ga, gb) = split_channels(&rt, 2).unwrap();
    let num = numeric_grads(&wide(&[&a, &b]), &r, |i| concat_channels(&i[0], &i[1]).unwrap());
    worst_rel_err(&[(to_f64(&ga), num[0].clone()), (to_f64(&gb), num[1].clone())])
}

/// `L(plus) - L(minus)` for the mean clamped BCE, summed per pixel from log
/// ratios so the size of `L` itself does not enter the rounding error.
fn bce_diff(plus: &Tensor<f64>, minus: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let c = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let mut acc = 0.0;
    for ((&p, &m), &t) in plus.data().iter().zip(minus.data()).zip(y.data()) {
        let (p, m) = (c(p), c(m));
        // -t ln(p/m) - (1 - t) ln((1-p)/(1-m))
        acc -= t * ((p - m) / m).ln_1p() + (1.0 - t) * ((m - p) / (1.0 - m)).ln_1p();
    }
    acc / y.len() as f64
}

/// Parameter step for whole-model checks.
pub const MODEL_EPS: f64 = 1e-6;

/// Second-order one-sided slopes further apart than this fraction of the
/// gradient scale mean a ReLU or pooling kink lies within two steps.
pub const KINK_TOL: f64 = 1e-3;

pub struct ModelCheck {
    pub worst: f64,
    pub checked: usize,
    pub kinks: usize,
}

/// Gradient check of the BCE training loss with respect to every parameter
/// of `model`. Finite differences run on `twin`, an `f64` copy of the same
/// architecture that receives `model`'s weights. Up to `per_tensor` random
/// entries of each parameter are compared; an entry whose step straddles a
/// kink has no derivative to compare against and is replaced by another.
pub fn check_model<T: Real, M: SegmentationModel<T>, W: SegmentationModel<f64>>(
    model: &mut M,
    twin: &mut W,
    x: &Tensor<T>,
    seed: u64,
    per_tensor: usize,
) -> ModelCheck {
    let mut rg = rng(seed ^ 0x5eed);
    let y = Tensor::<T>::from_fn(x.shape(), |_| if rg.gen_bool(0.3) { T::ONE } else { T::ZERO });
    model.zero_grad();
    let pred = model.forward(x, Mode::Train).unwrap();
    let (_, g) = bce_loss(&pred, &y).unwrap();
    model.backward(&g).unwrap();

    for (d, s) in twin.params_mut().into_iter().zip(model.params()) {
        assert_eq!(d.name, s.name);
        d.value = s.value.cast();
    }
    for (d, s) in twin.buffers_mut().into_iter().zip(model.buffers()) {
        d.value = s.value.cast();
    }
    let (x, y) = (x.cast::<f64>(), y.cast::<f64>());
    let base = twin.forward(&x, Mode::Train).unwrap();
    let scale = 1e-3 * norm(model.params().iter().flat_map(|p| p.grad.data().iter().map(|v| v.to_f64())));

    let mut out = ModelCheck { worst: 0.0, checked: 0, kinks: 0 };
    let mut pairs = Vec::new();
    for (pi, p) in model.params().iter().enumerate() {
        let len = p.grad.len();
        let mut order: Vec<usize> = (0..len).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rg);
        let mut a = Vec::with_capacity(per_tensor);
        let mut n = Vec::with_capacity(per_tensor);
        for e in order {
            if a.len() == per_tensor {
                break;
            }
            let mut at = |k: f64| {
                let orig = twin.params()[pi].value.data()[e];
                twin.params_mut()[pi].value.data_mut()[e] = orig + k * MODEL_EPS;
                let y = twin.forward(&x, Mode::Train).unwrap();
                twin.params_mut()[pi].value.data_mut()[e] = orig;
                y
            };
            let (p1, p2, m1, m2) = (at(1.0), at(2.0), at(-1.0), at(-2.0));
            let right = (4.0 * bce_diff(&p1, &base, &y) - bce_diff(&p2, &base, &y)) / (2.0 * MODEL_EPS);
            let left = (4.0 * bce_diff(&base, &m1, &y) - bce_diff(&base, &m2, &y)) / (2.0 * MODEL_EPS);
            let mismatch = (right - left).abs() / right.abs().max(left.abs()).max(scale);
            if mismatch > KINK_TOL {
                out.kinks += 1;
                continue;
            }
            a.push(p.grad.data()[e].to_f64());
            n.push(bce_diff(&p1, &m1, &y) / (2.0 * MODEL_EPS));
        }
        out.checked += a.len();
        pairs.push((a, n));
    }
    out.worst = worst_rel_err(&pairs);
    out
}

pub fn tiny_unet<T: Real>(seed: u64, mode: UpsampleMode) -> UNet<T> {
    UNet::build(UNetConfig {
        base_filters: 2,
        filter_step: 2,
        depth: 2,
        upsample_mode: mode,
        input_hw: (16, 16),
        seed,
        ..UNetConfig::default()
    })
    .unwrap()
}

pub fn tiny_linknet<T: Real>(seed: u64) -> LinkNetLite<T> {
    LinkNetLite::build(LinkNetConfig {
        base_filters: 2,
        filter_step: 1,
        input_hw: (32, 32),
        seed,
        ..LinkNetConfig::default()
    })
    .unwrap()
}

pub fn check_tiny_unet<T: Real>(seed: u64, mode: UpsampleMode) -> ModelCheck {
    let mut m = tiny_unet::<T>(seed, mode);
    let x = rand_tensor::<T>(&mut rng(seed), &[2, 1, 16, 16], 0.0, 1.0);
    check_model(&mut m, &mut tiny_unet::<f64>(seed, mode), &x, seed, 4)
}

pub fn check_tiny_linknet<T: Real>(seed: u64) -> ModelCheck {
    let mut m = tiny_linknet::<T>(seed);
    let x = rand_tensor::<T>(&mut rng(seed), &[2, 1, 32, 32], 0.0, 1.0);
    check_model(&mut m, &mut tiny_linknet::<f64>(seed), &x, seed, 3)
}

pub struct SuiteRow {
    pub name: &'static str,
    pub worst: f64,
    pub checked: usize,
    pub kinks: usize,
}

/// Every layer and tiny model at one precision, worst error over `seeds`.
/// Layer checks compare every input entry and never meet a kink.
pub fn gradient_suite<T: Real>(seeds: std::ops::Range<u64>) -> Vec<SuiteRow> {
    type Layer = fn(u64) -> f64;
    type Model = fn(u64) -> ModelCheck;
    let layers: Vec<(&'static str, Layer)> = vec![
        ("conv3x3", |s| check_conv::<T>(s, 3)),
        ("conv1x1", |s| check_conv::<T>(s, 1)),
        ("tconv2x2", check_tconv::<T>),
        ("batchnorm/train", |s| check_batchnorm::<T>(s, Mode::Train)),
        ("batchnorm/eval", |s| check_batchnorm::<T>(s, Mode::Eval)),
        ("relu", check_relu::<T>),
        ("sigmoid", check_sigmoid::<T>),
        ("maxpool", check_maxpool::<T>),
        ("maxunpool", check_unpool::<T>),
        ("concat", check_concat::<T>),
    ];
    let models: Vec<(&'static str, Model)> = vec![
        ("unet/tconv", |s| check_tiny_unet::<T>(s, UpsampleMode::TransposedConv)),
        ("unet/unpool", |s| check_tiny_unet::<T>(s, UpsampleMode::MaxUnpool)),
        ("linknet", check_tiny_linknet::<T>),
    ];
    let mut rows: Vec<SuiteRow> = layers
        .into_iter()
        .map(|(name, f)| SuiteRow { name, worst: seeds.clone().map(f).fold(0.0, f64::max), checked: 0, kinks: 0 })
        .collect();
    for (name, f) in models {
        let mut row = SuiteRow { name, worst: 0.0, checked: 0, kinks: 0 };
        for s in seeds.clone() {
            let c = f(s);
            row.worst = row.worst.max(c.worst);
            row.checked += c.checked;
            row.kinks += c.kinks;
        }
        rows.push(row);
    }
    rows
}

/// Brute-force per-pixel metrics: `[pixel_acc, mean_acc, mean_iou, fwiou,
/// precision, recall]`, classes with no true pixels left out of the means.
pub fn metrics_oracle(pred: &[f32], truth: &[f32], mode: lunet::ClassMode) -> [f64; 6] {
    let total = truth.len() as f64;
    let mut t = [0.0f64; 2];
    let mut hit = [0.0f64; 2];
    let mut col = [0.0f64; 2];
    for (&p, &g) in pred.iter().zip(truth) {
        let (p, g) = (p as usize, g as usize);
        t[g] += 1.0;
        col[p] += 1.0;
        if p == g {
            hit[g] += 1.0;
        }
    }
    let classes: &[usize] = match mode {
        lunet::ClassMode::TwoClass => &[0, 1],
        lunet::ClassMode::ForegroundOnly => &[1],
    };
    let iou = |i: usize| hit[i] / (t[i] + col[i] - hit[i]);
    let present: Vec<usize> = classes.iter().copied().filter(|&i| t[i] > 0.0).collect();
    let (mean_acc, mean_iou) = if present.is_empty() {
        let v = if col[1] == 0.0 { 1.0 } else { 0.0 };
        (v, v)
    } else {
        let k = present.len() as f64;
        (
            present.iter().map(|&i| hit[i] / t[i]).sum::<f64>() / k,
            present.iter().map(|&i| iou(i)).sum::<f64>() / k,
        )
    };
    let fwiou = (0..2).filter(|&i| t[i] > 0.0).map(|i| t[i] * iou(i)).sum::<f64>() / total;
    let (tp, fp, fn_) = (hit[1], col[1] - hit[1], t[1] - hit[1]);
    let ratio = |num: f64, den: f64, other: f64| {
        if den > 0.0 {
            num / den
        } else if other == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    [
        (hit[0] + hit[1]) / total,
        mean_acc,
        mean_iou,
        fwiou,
        ratio(tp, tp + fp, fn_),
        ratio(tp, tp + fn_, fp),
    ]
}

/// Exhaustive Otsu: every `t` in 0..255 splits bins `<= t` from `> t`; the
/// between-class variance `w0 w1 (mu0 - mu1)^2` is compared exactly as the
/// fraction `(S0 w1 - S1 w0)^2 / (w0 w1)`, first maximum wins.
pub fn otsu_oracle(hist: &[u64; 256]) -> Option<usize> {
    let mut best: Option<(usize, u128, u128)> = None;
    for t in 0..255 {
        let (mut w0, mut s0, mut w1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for (b, &c) in hist.iter().enumerate() {
            if b <= t {
                w0 += c as i128;
                s0 += (b as i128) * c as i128;
            } else {
                w1 += c as i128;
                s1 += (b as i128) * c as i128;
            }
        }
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let num = (s0 * w1 - s1 * w0).unsigned_abs().pow(2);
        let den = (w0 * w1) as u128;
        match best {
            Some((_, bn, bd)) if num * bd <= bn * den => {}
            _ => best = Some((t, num, den)),
        }
    }
    best.map(|(t, _, _)| t)
}

/// `next <= prev` up to accumulated rounding of a sum of squares.
pub fn non_increasing(prev: f64, next: f64) -> bool {
    next <= prev + 1e-12 * prev.abs().max(1e-300)
}
