//! Per-channel batch normalization over `N, H, W`.

use super::{Buffer, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Real> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    cache: Option<BnCache>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::ONE)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: Tensor::zeros(&[channels]),
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: Tensor::full(&[channels], T::ONE),
            },
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.gamma.value.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} expects {} channels, got {c}",
                self.gamma.name,
                self.gamma.value.len()
            )));
        }
        let p = h * w;
        let m = n * p;
        if mode == Mode::Train && m == 1 {
            return Err(Error::NumericalFault(format!(
                "{}: batch variance undefined for a single element per channel",
                self.gamma.name
            )));
        }
        let xd = x.data();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = vec![0.0f64; xd.len()];
        let mut inv_std = vec![0.0f64; c];
        for ci in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0f64;
                    for ni in 0..n {
                        sum += xd[(ni * c + ci) * p..][..p].iter().map(|v| v.to_f64()).sum::<f64>();
                    }
                    let mean = sum / m as f64;
                    let mut sq = 0.0f64;
                    for ni in 0..n {
                        sq += xd[(ni * c + ci) * p..][..p]
                            .iter()
                            .map(|v| {
                                let d = v.to_f64() - mean;
                                d * d
                            })
                            .sum::<f64>();
                    }
                    let var = sq / m as f64;
                    let rm = &mut self.running_mean.value.data_mut()[ci];
                    *rm = T::from_f64(BN_MOMENTUM * rm.to_f64() + (1.0 - BN_MOMENTUM) * mean);
                    let rv = &mut self.running_var.value.data_mut()[ci];
                    *rv = T::from_f64(BN_MOMENTUM * rv.to_f64() + (1.0 - BN_MOMENTUM) * var);
                    (mean, var)
                }
                Mode::Eval => (
                    self.running_mean.value.data()[ci].to_f64(),
                    self.running_var.value.data()[ci].to_f64(),
                ),
            };
            let is = 1.0 / (var + BN_EPSILON).sqrt();
            inv_std[ci] = is;
            let g = self.gamma.value.data()[ci].to_f64();
            let b = self.beta.value.data()[ci].to_f64();
            for ni in 0..n {
                let base = (ni * c + ci) * p;
                for i in base..base + p {
                    let xh = (xd[i].to_f64() - mean) * is;
                    xhat[i] = xh;
                    out.data_mut()[i] = T::from_f64(g * xh + b);
                }
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache(format!("{} has no forward cache", self.gamma.name)))?;
        let (n, c, h, w) = grad_out.dims4()?;
        if grad_out.len() != cache.xhat.len() || c != cache.inv_std.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: grad_out {:?} does not match forward",
                self.gamma.name,
                grad_out.shape()
            )));
        }
        let p = h * w;
        let m = (n * p) as f64;
        let gd = grad_out.data();
        let mut gx = Tensor::zeros(grad_out.shape());
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        for ci in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for ni in 0..n {
                let base = (ni * c + ci) * p;
                for i in base..base + p {
                    let dy = gd[i].to_f64();
                    sum_dy += dy;
                    sum_dy_xhat += dy * cache.xhat[i];
                }
            }
            dgamma[ci] = sum_dy_xhat;
            dbeta[ci] = sum_dy;
            let g = self.gamma.value.data()[ci].to_f64();
            let is = cache.inv_std[ci];
            for ni in 0..n {
                let base = (ni * c + ci) * p;
                for i in base..base + p {
                    let dy = gd[i].to_f64();
                    let v = match cache.mode {
                        Mode::Train => g * is / m * (m * dy - sum_dy - cache.xhat[i] * sum_dy_xhat),
                        Mode::Eval => g * is * dy,
                    };
                    gx.data_mut()[i] = T::from_f64(v);
                }
            }
        }
        self.gamma.accumulate(&dgamma);
        self.beta.accumulate(&dbeta);
        Ok(gx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.gamma, &self.beta]
    }

    pub fn buffers(&self) -> [&Buffer<T>; 2] {
        [&self.running_mean, &self.running_var]
    }

    pub fn buffers_mut(&mut self) -> [&mut Buffer<T>; 2] {
        [&mut self.running_mean, &mut self.running_var]
    }
}
