//! The lightweight U-Net: `depth` encoder conv-blocks with 2x2 max pooling, a
//! bottleneck block, `depth` decoder steps that upsample and concatenate the
//! matching encoder activation, and a 1x1 convolution with a sigmoid head.
//!
//! Encoder block `c` has `base_filters + filter_step * c` filters; the
//! bottleneck has `base_filters + filter_step * depth`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, ConvBlock, SegmentationModel};
use crate::nn::{
    concat_channels, maxunpool2x2, maxunpool2x2_backward, split_channels, Buffer, Conv2d,
    ConvTranspose2x2, GradTape, MaxPool2x2, Mode, Param, Sigmoid,
};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    /// 2x2 stride-2 transposed convolution.
    #[serde(rename = "tconv")]
    TransposedConv,
    /// 1x1 channel projection followed by unpooling with the paired encoder
    /// pool's argmax indices.
    #[serde(rename = "unpool")]
    MaxUnpool,
}

impl std::str::FromStr for UpsampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tconv" => Ok(UpsampleMode::TransposedConv),
            "unpool" => Ok(UpsampleMode::MaxUnpool),
            other => Err(Error::InvalidConfig(format!("unknown upsample mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub base_filters: usize,
    pub filter_step: usize,
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub upsample_mode: UpsampleMode,
    pub input_hw: (usize, usize),
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            base_filters: 16,
            filter_step: 16,
            depth: 4,
            in_channels: 1,
            out_channels: 1,
            upsample_mode: UpsampleMode::TransposedConv,
            input_hw: (128, 128),
            seed: 0,
        }
    }
}

impl UNetConfig {
    /// Filter counts of the encoder blocks followed by the bottleneck.
    pub fn filters(&self) -> Vec<usize> {
        (0..=self.depth)
            .map(|c| self.base_filters + self.filter_step * c)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 || self.depth == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig(
                "base_filters, depth and channel counts must be positive".into(),
            ));
        }
        let m = 1usize << self.depth;
        let (h, w) = self.input_hw;
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::InvalidConfig(format!(
                "input {h}x{w} must be divisible by {m} for depth {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Number of learnable scalars, summed layer by layer.
    pub fn param_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let block = |cin: usize, cout: usize| conv(cin, cout, 3) + 2 * cout + conv(cout, cout, 3) + 2 * cout;
        let f = self.filters();
        let mut total = 0;
        let mut cin = self.in_channels;
        for &fc in &f {
            total += block(cin, fc);
            cin = fc;
        }
        for level in (0..self.depth).rev() {
            total += match self.upsample_mode {
                UpsampleMode::TransposedConv => f[level + 1] * f[level] * 4 + f[level],
                UpsampleMode::MaxUnpool => conv(f[level + 1], f[level], 1),
            };
            total += block(2 * f[level], f[level]);
        }
        total + conv(f[0], self.out_channels, 1)
    }
}

#[derive(Clone, Debug)]
enum UpStep<T: Real> {
    Transposed(ConvTranspose2x2<T>),
    Unpool(Conv2d<T>),
}

impl<T: Real> UpStep<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            UpStep::Transposed(t) => t.params().to_vec(),
            UpStep::Unpool(c) => c.params().to_vec(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            UpStep::Transposed(t) => t.params_mut().into_iter().collect(),
            UpStep::Unpool(c) => c.params_mut().into_iter().collect(),
        }
    }
}

// Tape stage identifiers.
const ENC: usize = 0;
const POOL: usize = 100;
const BOTTLENECK: usize = 200;
const UP: usize = 300;
const DEC: usize = 400;
const HEAD: usize = 500;

#[derive(Clone, Debug)]
pub struct UNet<T: Real> {
    config: UNetConfig,
    encoder: Vec<ConvBlock<T>>,
    pools: Vec<MaxPool2x2>,
    bottleneck: ConvBlock<T>,
    ups: Vec<UpStep<T>>,
    decoder: Vec<ConvBlock<T>>,
    head: Conv2d<T>,
    sigmoid: Sigmoid<T>,
    tape: GradTape,
    /// Positions written by each decoder unpool in the last forward pass,
    /// indexed by encoder level.
    last_unpool_positions: Vec<Vec<usize>>,
}

impl<T: Real> UNet<T> {
    pub fn build(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f = config.filters();
        let depth = config.depth;
        let mut encoder = Vec::with_capacity(depth);
        let mut cin = config.in_channels;
        for (c, &fc) in f.iter().take(depth).enumerate() {
            encoder.push(ConvBlock::new(&format!("enc{c}"), cin, fc, &mut rng));
            cin = fc;
        }
        let bottleneck = ConvBlock::new("bottleneck", f[depth - 1], f[depth], &mut rng);
        let mut ups = Vec::with_capacity(depth);
        let mut decoder = Vec::with_capacity(depth);
        for (i, level) in (0..depth).rev().enumerate() {
            let up = match config.upsample_mode {
                UpsampleMode::TransposedConv => {
                    UpStep::Transposed(ConvTranspose2x2::new(&format!("up{i}"), f[level + 1], f[level], &mut rng))
                }
                UpsampleMode::MaxUnpool => {
                    UpStep::Unpool(Conv2d::new(&format!("up{i}.proj"), f[level + 1], f[level], 1, &mut rng))
                }
            };
            ups.push(up);
            decoder.push(ConvBlock::new(&format!("dec{i}"), 2 * f[level], f[level], &mut rng));
        }
        let head = Conv2d::new("head", f[0], config.out_channels, 1, &mut rng);
        Ok(UNet {
            config,
            encoder,
            pools: (0..depth).map(|_| MaxPool2x2::new()).collect(),
            bottleneck,
            ups,
            decoder,
            head,
            sigmoid: Sigmoid::new(),
            tape: GradTape::default(),
            last_unpool_positions: vec![Vec::new(); depth],
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn head_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.head
    }

    /// Argmax offsets recorded by encoder pool `level` in the last forward.
    pub fn pool_indices(&self, level: usize) -> Option<&[usize]> {
        self.pools.get(level).and_then(|p| p.indices())
    }

    /// Flat offsets that received a value from decoder unpooling at encoder
    /// `level` in the last forward (empty in transposed-conv mode).
    pub fn unpool_positions(&self, level: usize) -> &[usize] {
        &self.last_unpool_positions[level]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let m = 1usize << self.config.depth;
        if c != self.config.in_channels || h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "U-Net input {:?} needs {} channels and H, W divisible by {m}",
                x.shape(),
                self.config.in_channels
            )));
        }
        Ok(())
    }
}

impl<T: Real> SegmentationModel<T> for UNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.tape.clear();
        let depth = self.config.depth;
        let mut skips = Vec::with_capacity(depth);
        let mut h = x.clone();
        for c in 0..depth {
            let s = self.encoder[c].forward(&h, mode)?;
            self.tape.record(ENC + c);
            h = self.pools[c].forward(&s)?;
            self.tape.record(POOL + c);
            skips.push(s);
        }
        h = self.bottleneck.forward(&h, mode)?;
        self.tape.record(BOTTLENECK);
        for i in 0..depth {
            let level = depth - 1 - i;
            h = match &mut self.ups[i] {
                UpStep::Transposed(t) => t.forward(&h)?,
                UpStep::Unpool(proj) => {
                    let p = proj.forward(&h)?;
                    let pool = &self.pools[level];
                    let idx = pool
                        .indices()
                        .ok_or_else(|| Error::StaleCache(format!("pool {level} has no indices")))?;
                    self.last_unpool_positions[level] = idx.to_vec();
                    maxunpool2x2(&p, idx, pool.input_shape())?
                }
            };
            self.tape.record(UP + i);
            h = concat_channels(&h, &skips[level])?;
            h = self.decoder[i].forward(&h, mode)?;
            self.tape.record(DEC + i);
        }
        let logits = self.head.forward(&h)?;
        let y = self.sigmoid.forward(&logits);
        self.tape.record(HEAD);
        y.ensure_finite("U-Net output")?;
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<()> {
        let depth = self.config.depth;
        self.tape.pop_expect(HEAD)?;
        let g = self.sigmoid.backward(grad_out)?;
        let mut g = self.head.backward(&g)?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        let f = self.config.filters();
        for i in (0..depth).rev() {
            let level = depth - 1 - i;
            self.tape.pop_expect(DEC + i)?;
            let gc = self.decoder[i].backward(&g)?;
            let (gu, gs) = split_channels(&gc, f[level])?;
            skip_grads[level] = Some(gs);
            self.tape.pop_expect(UP + i)?;
            g = match &mut self.ups[i] {
                UpStep::Transposed(t) => t.backward(&gu)?,
                UpStep::Unpool(proj) => {
                    let (n, c, hh, ww) = gu.dims4()?;
                    let idx = self.pools[level]
                        .indices()
                        .ok_or_else(|| Error::StaleCache(format!("pool {level} has no indices")))?;
                    let gp = maxunpool2x2_backward(&gu, idx, &[n, c, hh / 2, ww / 2])?;
                    proj.backward(&gp)?
                }
            };
        }
        self.tape.pop_expect(BOTTLENECK)?;
        g = self.bottleneck.backward(&g)?;
        for c in (0..depth).rev() {
            self.tape.pop_expect(POOL + c)?;
            let mut gs = self.pools[c].backward(&g)?;
            if let Some(skip) = skip_grads[c].take() {
                gs.add_assign(&skip)?;
            }
            self.tape.pop_expect(ENC + c)?;
            g = self.encoder[c].backward(&gs)?;
        }
        Ok(())
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for b in &self.encoder {
            v.extend(b.params());
        }
        v.extend(self.bottleneck.params());
        for (u, d) in self.ups.iter().zip(&self.decoder) {
            v.extend(u.params());
            v.extend(d.params());
        }
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for b in &mut self.encoder {
            v.extend(b.params_mut());
        }
        v.extend(self.bottleneck.params_mut());
        for (u, d) in self.ups.iter_mut().zip(&mut self.decoder) {
            v.extend(u.params_mut());
            v.extend(d.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = Vec::new();
        for b in &self.encoder {
            v.extend(b.buffers());
        }
        v.extend(self.bottleneck.buffers());
        for d in &self.decoder {
            v.extend(d.buffers());
        }
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = Vec::new();
        for b in &mut self.encoder {
            v.extend(b.buffers_mut());
        }
        v.extend(self.bottleneck.buffers_mut());
        for d in &mut self.decoder {
            v.extend(d.buffers_mut());
        }
        v
    }

    fn architecture(&self) -> Architecture {
        Architecture::Unet(self.config.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: UpsampleMode) -> UNetConfig {
        UNetConfig {
            base_filters: 4,
            filter_step: 4,
            depth: 2,
            upsample_mode: mode,
            input_hw: (8, 8),
            seed: 3,
            ..UNetConfig::default()
        }
    }

    #[test]
    fn default_filter_progression() {
        assert_eq!(UNetConfig::default().filters(), vec![16, 32, 48, 64, 80]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let cfg = UNetConfig {
            input_hw: (100, 128),
            ..UNetConfig::default()
        };
        assert!(matches!(UNet::<f32>::build(cfg), Err(Error::InvalidConfig(_))));
        let mut net = UNet::<f32>::build(small(UpsampleMode::TransposedConv)).unwrap();
        let x = Tensor::zeros(&[1, 1, 6, 8]);
        assert!(matches!(net.forward(&x, Mode::Eval), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn backward_twice_is_stale() {
        let mut net = UNet::<f32>::build(small(UpsampleMode::MaxUnpool)).unwrap();
        let x = Tensor::from_fn(&[2, 1, 8, 8], |i| (i as f32 * 0.37).sin());
        let y = net.forward(&x, Mode::Train).unwrap();
        let g = Tensor::full(y.shape(), 0.1);
        net.backward(&g).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::StaleCache(_))));
    }

    #[test]
    fn closed_form_count_matches_both_modes() {
        for mode in [UpsampleMode::TransposedConv, UpsampleMode::MaxUnpool] {
            let cfg = small(mode);
            let net = UNet::<f32>::build(cfg.clone()).unwrap();
            assert_eq!(net.param_count(), cfg.param_count());
        }
    }
}
