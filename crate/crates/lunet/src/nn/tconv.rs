//! Transposed convolution with a 2x2 kernel and stride 2.
//!
//! Weight layout is `[Cin, Cout, 2, 2]`. Every input pixel scatters into its
//! own non-overlapping 2x2 output window, so the output is exactly `2H x 2W`.

use rand::Rng;

use super::{he_uniform, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn check<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, cin, h, wd) = x.dims4()?;
    let (wcin, cout, kh, kw) = w.dims4()?;
    if wcin != cin || kh != 2 || kw != 2 {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv kernel {:?} does not fit input with {cin} channels",
            w.shape()
        )));
    }
    if h == 0 || wd == 0 {
        return Err(Error::ShapeMismatch("transposed conv needs H, W >= 1".into()));
    }
    Ok((n, cin, h, wd, cout))
}

pub fn tconv2x2_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, cin, h, wd, cout) = check(x, w)?;
    if b.shape() != [cout] {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv bias {:?}, expected [{cout}]",
            b.shape()
        )));
    }
    let p = h * wd;
    let (oh, ow) = (2 * h, 2 * wd);
    let w64: Vec<f64> = w.data().iter().map(|v| v.to_f64()).collect();
    let mut out = Tensor::zeros(&[n, cout, oh, ow]);
    let mut x64 = vec![0.0f64; cin * p];
    let mut acc = vec![0.0f64; p];
    for ni in 0..n {
        for (d, s) in x64.iter_mut().zip(&x.data()[ni * cin * p..(ni + 1) * cin * p]) {
            *d = s.to_f64();
        }
        for co in 0..cout {
            let bias = b.data()[co].to_f64();
            for dy in 0..2 {
                for dx in 0..2 {
                    acc.fill(0.0);
                    for ci in 0..cin {
                        let wv = w64[((ci * cout + co) * 2 + dy) * 2 + dx];
                        for (a, &v) in acc.iter_mut().zip(&x64[ci * p..(ci + 1) * p]) {
                            *a += wv * v;
                        }
                    }
                    let plane = &mut out.data_mut()[(ni * cout + co) * oh * ow..][..oh * ow];
                    for y in 0..h {
                        for xx in 0..wd {
                            plane[(2 * y + dy) * ow + 2 * xx + dx] = T::from_f64(acc[y * wd + xx] + bias);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_w, grad_b)` with parameter gradients in `f64`.
pub fn tconv2x2_backward<T: Real>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<f64>, Vec<f64>)> {
    let (n, cin, h, wd, cout) = check(x, w)?;
    let (oh, ow) = (2 * h, 2 * wd);
    if grad_out.shape() != [n, cout, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, cout, oh, ow]
        )));
    }
    let p = h * wd;
    let w64: Vec<f64> = w.data().iter().map(|v| v.to_f64()).collect();
    let mut gw = vec![0.0f64; w.len()];
    let mut gb = vec![0.0f64; cout];
    let mut gx = Tensor::zeros(x.shape());
    // gsub[(co*2+dy)*2+dx] holds the gradient at output offset (dy, dx) as an H x W plane.
    let mut gsub = vec![0.0f64; cout * 4 * p];
    let mut x64 = vec![0.0f64; cin * p];
    let mut dx64 = vec![0.0f64; p];
    for ni in 0..n {
        for (d, s) in x64.iter_mut().zip(&x.data()[ni * cin * p..(ni + 1) * cin * p]) {
            *d = s.to_f64();
        }
        for co in 0..cout {
            let plane = &grad_out.data()[(ni * cout + co) * oh * ow..][..oh * ow];
            gb[co] += plane.iter().map(|v| v.to_f64()).sum::<f64>();
            for dy in 0..2 {
                for dx in 0..2 {
                    let dst = &mut gsub[((co * 2 + dy) * 2 + dx) * p..][..p];
                    for y in 0..h {
                        for xx in 0..wd {
                            dst[y * wd + xx] = plane[(2 * y + dy) * ow + 2 * xx + dx].to_f64();
                        }
                    }
                }
            }
        }
        for ci in 0..cin {
            let xs = &x64[ci * p..(ci + 1) * p];
            dx64.fill(0.0);
            for co in 0..cout {
                for t in 0..4 {
                    let g = &gsub[(co * 4 + t) * p..][..p];
                    let widx = (ci * cout + co) * 4 + t;
                    gw[widx] += xs.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                    let wv = w64[widx];
                    for (d, &gv) in dx64.iter_mut().zip(g) {
                        *d += wv * gv;
                    }
                }
            }
            for (o, &v) in gx.data_mut()[(ni * cin + ci) * p..][..p].iter_mut().zip(&dx64) {
                *o = T::from_f64(v);
            }
        }
    }
    Ok((gx, gw, gb))
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2x2<T: Real> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> ConvTranspose2x2<T> {
    /// Each output pixel receives one tap from every input channel, so the
    /// He fan-in is `cin`.
    pub fn new<R: Rng>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        ConvTranspose2x2 {
            weight: Param::new(format!("{name}.weight"), he_uniform(rng, &[cin, cout, 2, 2], cin)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = tconv2x2_forward(x, &self.weight.value, &self.bias.value)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache(format!("{} has no forward cache", self.weight.name)))?;
        let (gx, gw, gb) = tconv2x2_backward(grad_out, &x, &self.weight.value)?;
        self.weight.accumulate(&gw);
        self.bias.accumulate(&gb);
        Ok(gx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
