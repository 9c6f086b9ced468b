//! Square-kernel stride-1 convolution (cross-correlation) with zero padding.
//!
//! The default path lowers each image to a patch matrix and multiplies it by
//! the weight matrix. Each output element is accumulated in `f64` in the same
//! `(ci, ky, kx)` order as [`conv2d_forward_direct`], so the two agree bitwise.

use rand::Rng;

use super::{he_uniform, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn check_shapes<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4()?;
    if wcin != cin {
        return Err(Error::ShapeMismatch(format!(
            "conv input has {cin} channels, kernel expects {wcin}"
        )));
    }
    if kh != kw || kh % 2 == 0 || 2 * pad + 1 != kh {
        return Err(Error::ShapeMismatch(format!(
            "conv needs an odd square kernel with same padding, got {kh}x{kw} pad {pad}"
        )));
    }
    if b.shape() != [cout] {
        return Err(Error::ShapeMismatch(format!(
            "conv bias shape {:?}, expected [{cout}]",
            b.shape()
        )));
    }
    Ok((n, cin, h, wd, cout, kh))
}

/// Lowers one `[C, H, W]` image into a `(C*k*k) x (H*W)` patch matrix.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [f64]) {
    let p = h * w;
    for ci in 0..c {
        let plane = &x[ci * p..(ci + 1) * p];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * p..][..p];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, o) in out.iter_mut().enumerate() {
                        let sx = xx as isize + kx as isize - pad as isize;
                        *o = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize].to_f64()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto a `[C, H, W]` image.
fn col2im(dcol: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [f64]) {
    let p = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * p..(ci + 1) * p];
        for ky in 0..k {
            for kx in 0..k {
                let row = &dcol[((ci * k + ky) * k + kx) * p..][..p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

/// `acc[r] += sum_k wrows[r][k] * col[k]` for a block of output rows, walking
/// `k` in ascending order for every output element.
fn gemm_rows(wrows: &[&[f64]], col: &[f64], p: usize, acc: &mut [Vec<f64>]) {
    let kdim = wrows[0].len();
    match wrows.len() {
        4 => {
            let (a0, rest) = acc.split_at_mut(1);
            let (a1, rest) = rest.split_at_mut(1);
            let (a2, a3) = rest.split_at_mut(1);
            let (a0, a1, a2, a3) = (&mut a0[0], &mut a1[0], &mut a2[0], &mut a3[0]);
            for kk in 0..kdim {
                let c = &col[kk * p..(kk + 1) * p];
                let (w0, w1, w2, w3) = (wrows[0][kk], wrows[1][kk], wrows[2][kk], wrows[3][kk]);
                for i in 0..p {
                    let v = c[i];
                    a0[i] += w0 * v;
                    a1[i] += w1 * v;
                    a2[i] += w2 * v;
                    a3[i] += w3 * v;
                }
            }
        }
        _ => {
            for (r, wr) in wrows.iter().enumerate() {
                let a = &mut acc[r];
                for kk in 0..kdim {
                    let c = &col[kk * p..(kk + 1) * p];
                    let wv = wr[kk];
                    for (ai, &v) in a.iter_mut().zip(c) {
                        *ai += wv * v;
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, wd, cout, k) = check_shapes(x, w, b, pad)?;
    let p = h * wd;
    let kdim = cin * k * k;
    let w64: Vec<f64> = w.data().iter().map(|v| v.to_f64()).collect();
    let b64: Vec<f64> = b.data().iter().map(|v| v.to_f64()).collect();
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    let mut col = vec![0.0f64; kdim * p];
    let mut acc = vec![vec![0.0f64; p]; 4];
    for ni in 0..n {
        let xi = &x.data()[ni * cin * p..(ni + 1) * cin * p];
        im2col(xi, cin, h, wd, k, pad, &mut col);
        let out_img = &mut out.data_mut()[ni * cout * p..(ni + 1) * cout * p];
        let mut co = 0;
        while co < cout {
            let rows = (cout - co).min(4);
            let wrows: Vec<&[f64]> = (co..co + rows)
                .map(|r| &w64[r * kdim..(r + 1) * kdim])
                .collect();
            for a in acc.iter_mut().take(rows) {
                a.fill(0.0);
            }
            gemm_rows(&wrows, &col, p, &mut acc[..rows]);
            for r in 0..rows {
                let dst = &mut out_img[(co + r) * p..(co + r + 1) * p];
                let bias = b64[co + r];
                for (o, &a) in dst.iter_mut().zip(&acc[r]) {
                    *o = T::from_f64(a + bias);
                }
            }
            co += rows;
        }
    }
    Ok(out)
}

/// Reference convolution as explicit nested loops.
pub fn conv2d_forward_direct<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, wd, cout, k) = check_shapes(x, w, b, pad)?;
    let xd = x.data();
    let wdat = w.data();
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    let od = out.data_mut();
    for ni in 0..n {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = 0.0f64;
                    for ci in 0..cin {
                        for ky in 0..k {
                            let sy = y as isize + ky as isize - pad as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let sx = xx as isize + kx as isize - pad as isize;
                                if sx < 0 || sx >= wd as isize {
                                    continue;
                                }
                                let xv = xd[((ni * cin + ci) * h + sy as usize) * wd + sx as usize];
                                let wv = wdat[((co * cin + ci) * k + ky) * k + kx];
                                acc += wv.to_f64() * xv.to_f64();
                            }
                        }
                    }
                    od[((ni * cout + co) * h + y) * wd + xx] = T::from_f64(acc + b.data()[co].to_f64());
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution, accumulated over the batch in `f64`.
#[derive(Clone, Debug)]
pub struct ConvGrads<T: Real> {
    pub grad_x: Tensor<T>,
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
}

pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    pad: usize,
) -> Result<ConvGrads<T>> {
    let (n, cin, h, wd) = x.dims4()?;
    let (cout, _, k, _) = w.dims4()?;
    if grad_out.shape() != [n, cout, h, wd] {
        return Err(Error::ShapeMismatch(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, cout, h, wd]
        )));
    }
    let p = h * wd;
    let kdim = cin * k * k;
    let w64: Vec<f64> = w.data().iter().map(|v| v.to_f64()).collect();
    let mut grad_w = vec![0.0f64; cout * kdim];
    let mut grad_b = vec![0.0f64; cout];
    let mut grad_x = Tensor::zeros(&[n, cin, h, wd]);
    let mut col = vec![0.0f64; kdim * p];
    let mut dcol = vec![0.0f64; kdim * p];
    let mut dx = vec![0.0f64; cin * p];
    let mut g = vec![0.0f64; cout * p];
    for ni in 0..n {
        let xi = &x.data()[ni * cin * p..(ni + 1) * cin * p];
        im2col(xi, cin, h, wd, k, pad, &mut col);
        for (gv, &s) in g
            .iter_mut()
            .zip(&grad_out.data()[ni * cout * p..(ni + 1) * cout * p])
        {
            *gv = s.to_f64();
        }
        dcol.fill(0.0);
        for co in 0..cout {
            let gc = &g[co * p..(co + 1) * p];
            grad_b[co] += gc.iter().sum::<f64>();
            let gw = &mut grad_w[co * kdim..(co + 1) * kdim];
            for kk in 0..kdim {
                let c = &col[kk * p..(kk + 1) * p];
                gw[kk] += gc.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
                let wv = w64[co * kdim + kk];
                if wv != 0.0 {
                    for (d, &gv) in dcol[kk * p..(kk + 1) * p].iter_mut().zip(gc) {
                        *d += wv * gv;
                    }
                }
            }
        }
        dx.fill(0.0);
        col2im(&dcol, cin, h, wd, k, pad, &mut dx);
        for (o, &v) in grad_x.data_mut()[ni * cin * p..(ni + 1) * cin * p]
            .iter_mut()
            .zip(&dx)
        {
            *o = T::from_f64(v);
        }
    }
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

/// Convolution layer owning its weights, bias, and forward cache.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Real> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pad: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    /// He-uniform weights over the kernel fan-in, zero bias.
    pub fn new<R: Rng>(name: &str, cin: usize, cout: usize, kernel: usize, rng: &mut R) -> Self {
        let weight = he_uniform(rng, &[cout, cin, kernel, kernel], cin * kernel * kernel);
        Conv2d {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            pad: kernel / 2,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight.value, &self.bias.value, self.pad)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache(format!("{} has no forward cache", self.weight.name)))?;
        let grads = conv2d_backward(grad_out, &x, &self.weight.value, self.pad)?;
        self.weight.accumulate(&grads.grad_w);
        self.bias.accumulate(&grads.grad_b);
        Ok(grads.grad_x)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
