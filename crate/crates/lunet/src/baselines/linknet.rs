//! A reduced LinkNet: residual encoder blocks and decoder blocks whose outputs
//! are added to (not concatenated with) the matching encoder features.
//!
//! ```text
//! stem   conv3x3 -> BN -> ReLU -> pool        H/2   F0
//! enc1   residual(F0 -> F1)                   H/2
//! enc2   pool -> residual(F1 -> F2)           H/4
//! enc3   pool -> residual(F2 -> F3)           H/8
//! enc4   pool -> residual(F3 -> F4)           H/16
//! dec4   up(F4 -> F3) + enc3                  H/8
//! dec3   up(F3 -> F2) + enc2                  H/4
//! dec2   up(F2 -> F1) + enc1                  H/2
//! dec1   up(F1 -> F0)                         H
//! final  conv3x3 -> BN -> ReLU -> conv1x1 -> sigmoid
//! ```
//!
//! `Fi = base_filters + filter_step * i`. Each `up` is a 2x2 transposed
//! convolution followed by BN, ReLU, conv3x3, BN, ReLU.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, SegmentationModel};
use crate::nn::{
    BatchNorm2d, Buffer, Conv2d, ConvTranspose2x2, GradTape, MaxPool2x2, Mode, Param, Relu, Sigmoid,
};
use crate::tensor::{Real, Tensor};

const BLOCKS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkNetConfig {
    pub base_filters: usize,
    pub filter_step: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub input_hw: (usize, usize),
    pub seed: u64,
}

impl Default for LinkNetConfig {
    fn default() -> Self {
        LinkNetConfig {
            base_filters: 16,
            filter_step: 16,
            in_channels: 1,
            out_channels: 1,
            input_hw: (128, 128),
            seed: 0,
        }
    }
}

impl LinkNetConfig {
    pub fn filters(&self) -> Vec<usize> {
        (0..=BLOCKS).map(|i| self.base_filters + self.filter_step * i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_hw;
        if self.base_filters == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("filter and channel counts must be positive".into()));
        }
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::InvalidConfig(format!("input {h}x{w} must be divisible by 16")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ResidualBlock<T: Real> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    shortcut: Option<Conv2d<T>>,
    relu_out: Relu<T>,
}

impl<T: Real> ResidualBlock<T> {
    fn new<R: Rng>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout),
            relu1: Relu::new(),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout),
            shortcut: (cin != cout).then(|| Conv2d::new(&format!("{name}.shortcut"), cin, cout, 1, rng)),
            relu_out: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv1.forward(x)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.relu1.forward(&h);
        let h = self.conv2.forward(&h)?;
        let mut h = self.bn2.forward(&h, mode)?;
        match &mut self.shortcut {
            Some(proj) => h.add_assign(&proj.forward(x)?)?,
            None => h.add_assign(x)?,
        }
        Ok(self.relu_out.forward(&h))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu_out.backward(g)?;
        let mut gs = match &mut self.shortcut {
            Some(proj) => proj.backward(&g)?,
            None => g.clone(),
        };
        let gm = self.bn2.backward(&g)?;
        let gm = self.conv2.backward(&gm)?;
        let gm = self.relu1.backward(&gm)?;
        let gm = self.bn1.backward(&gm)?;
        gs.add_assign(&self.conv1.backward(&gm)?)?;
        Ok(gs)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::new();
        v.extend(self.conv1.params());
        v.extend(self.bn1.params());
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        if let Some(p) = &self.shortcut {
            v.extend(p.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::new();
        v.extend(self.conv1.params_mut());
        v.extend(self.bn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        if let Some(p) = &mut self.shortcut {
            v.extend(p.params_mut());
        }
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = Vec::new();
        v.extend(self.bn1.buffers());
        v.extend(self.bn2.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = Vec::new();
        v.extend(self.bn1.buffers_mut());
        v.extend(self.bn2.buffers_mut());
        v
    }
}

#[derive(Clone, Debug)]
struct DecoderBlock<T: Real> {
    up: ConvTranspose2x2<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    conv: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    relu2: Relu<T>,
}

impl<T: Real> DecoderBlock<T> {
    fn new<R: Rng>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        DecoderBlock {
            up: ConvTranspose2x2::new(&format!("{name}.up"), cin, cout, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout),
            relu1: Relu::new(),
            conv: Conv2d::new(&format!("{name}.conv"), cout, cout, 3, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout),
            relu2: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.up.forward(x)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.relu1.forward(&h);
        let h = self.conv.forward(&h)?;
        let h = self.bn2.forward(&h, mode)?;
        Ok(self.relu2.forward(&h))
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu2.backward(g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.up.backward(&g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::new();
        v.extend(self.up.params());
        v.extend(self.bn1.params());
        v.extend(self.conv.params());
        v.extend(self.bn2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::new();
        v.extend(self.up.params_mut());
        v.extend(self.bn1.params_mut());
        v.extend(self.conv.params_mut());
        v.extend(self.bn2.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = Vec::new();
        v.extend(self.bn1.buffers());
        v.extend(self.bn2.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = Vec::new();
        v.extend(self.bn1.buffers_mut());
        v.extend(self.bn2.buffers_mut());
        v
    }
}

const STEM: usize = 0;
const STEM_POOL: usize = 1;
const ENC: usize = 10;
const ENC_POOL: usize = 20;
const DEC: usize = 30;
const FINAL: usize = 40;

#[derive(Clone, Debug)]
pub struct LinkNetLite<T: Real> {
    config: LinkNetConfig,
    stem_conv: Conv2d<T>,
    stem_bn: BatchNorm2d<T>,
    stem_relu: Relu<T>,
    stem_pool: MaxPool2x2,
    encoder: Vec<ResidualBlock<T>>,
    /// Pools in front of encoder blocks 2..=4.
    pools: Vec<MaxPool2x2>,
    /// Ordered deepest first: dec4, dec3, dec2, dec1.
    decoder: Vec<DecoderBlock<T>>,
    final_conv: Conv2d<T>,
    final_bn: BatchNorm2d<T>,
    final_relu: Relu<T>,
    head: Conv2d<T>,
    sigmoid: Sigmoid<T>,
    tape: GradTape,
}

impl<T: Real> LinkNetLite<T> {
    pub fn build(config: LinkNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f = config.filters();
        let stem_conv = Conv2d::new("stem.conv", config.in_channels, f[0], 3, &mut rng);
        let encoder = (0..BLOCKS)
            .map(|i| ResidualBlock::new(&format!("enc{}", i + 1), f[i], f[i + 1], &mut rng))
            .collect();
        let decoder = (0..BLOCKS)
            .rev()
            .map(|i| DecoderBlock::new(&format!("dec{}", i + 1), f[i + 1], f[i], &mut rng))
            .collect();
        let final_conv = Conv2d::new("final.conv", f[0], f[0], 3, &mut rng);
        let head = Conv2d::new("head", f[0], config.out_channels, 1, &mut rng);
        Ok(LinkNetLite {
            stem_bn: BatchNorm2d::new("stem.bn", f[0]),
            stem_relu: Relu::new(),
            stem_pool: MaxPool2x2::new(),
            stem_conv,
            encoder,
            pools: (1..BLOCKS).map(|_| MaxPool2x2::new()).collect(),
            decoder,
            final_conv,
            final_bn: BatchNorm2d::new("final.bn", f[0]),
            final_relu: Relu::new(),
            head,
            sigmoid: Sigmoid::new(),
            tape: GradTape::default(),
            config,
        })
    }

    pub fn config(&self) -> &LinkNetConfig {
        &self.config
    }
}

impl<T: Real> SegmentationModel<T> for LinkNetLite<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.in_channels || h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "LinkNet input {:?} needs {} channels and H, W divisible by 16",
                x.shape(),
                self.config.in_channels
            )));
        }
        self.tape.clear();
        let s = self.stem_conv.forward(x)?;
        let s = self.stem_bn.forward(&s, mode)?;
        let s = self.stem_relu.forward(&s);
        self.tape.record(STEM);
        let mut h = self.stem_pool.forward(&s)?;
        self.tape.record(STEM_POOL);
        let mut feats = Vec::with_capacity(BLOCKS);
        for i in 0..BLOCKS {
            if i > 0 {
                h = self.pools[i - 1].forward(&h)?;
                self.tape.record(ENC_POOL + i);
            }
            h = self.encoder[i].forward(&h, mode)?;
            self.tape.record(ENC + i);
            feats.push(h.clone());
        }
        for (j, block) in self.decoder.iter_mut().enumerate() {
            // block j maps encoder level BLOCKS-j to BLOCKS-j-1
            h = block.forward(&h, mode)?;
            let link = BLOCKS - j - 1;
            if link > 0 {
                h.add_assign(&feats[link - 1])?;
            }
            self.tape.record(DEC + j);
        }
        let h = self.final_conv.forward(&h)?;
        let h = self.final_bn.forward(&h, mode)?;
        let h = self.final_relu.forward(&h);
        let logits = self.head.forward(&h)?;
        let y = self.sigmoid.forward(&logits);
        self.tape.record(FINAL);
        y.ensure_finite("LinkNet output")?;
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<()> {
        self.tape.pop_expect(FINAL)?;
        let g = self.sigmoid.backward(grad_out)?;
        let g = self.head.backward(&g)?;
        let g = self.final_relu.backward(&g)?;
        let g = self.final_bn.backward(&g)?;
        let mut g = self.final_conv.backward(&g)?;
        let mut link_grads: Vec<Option<Tensor<T>>> = vec![None; BLOCKS];
        for j in (0..BLOCKS).rev() {
            self.tape.pop_expect(DEC + j)?;
            let link = BLOCKS - j - 1;
            if link > 0 {
                link_grads[link - 1] = Some(g.clone());
            }
            g = self.decoder[j].backward(&g)?;
        }
        for i in (0..BLOCKS).rev() {
            if let Some(lg) = link_grads[i].take() {
                g.add_assign(&lg)?;
            }
            self.tape.pop_expect(ENC + i)?;
            g = self.encoder[i].backward(&g)?;
            if i > 0 {
                self.tape.pop_expect(ENC_POOL + i)?;
                g = self.pools[i - 1].backward(&g)?;
            }
        }
        self.tape.pop_expect(STEM_POOL)?;
        let g = self.stem_pool.backward(&g)?;
        self.tape.pop_expect(STEM)?;
        let g = self.stem_relu.backward(&g)?;
        let g = self.stem_bn.backward(&g)?;
        self.stem_conv.backward(&g)?;
        Ok(())
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::new();
        v.extend(self.stem_conv.params());
        v.extend(self.stem_bn.params());
        for b in &self.encoder {
            v.extend(b.params());
        }
        for b in &self.decoder {
            v.extend(b.params());
        }
        v.extend(self.final_conv.params());
        v.extend(self.final_bn.params());
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::new();
        v.extend(self.stem_conv.params_mut());
        v.extend(self.stem_bn.params_mut());
        for b in &mut self.encoder {
            v.extend(b.params_mut());
        }
        for b in &mut self.decoder {
            v.extend(b.params_mut());
        }
        v.extend(self.final_conv.params_mut());
        v.extend(self.final_bn.params_mut());
        v.extend(self.head.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v: Vec<&Buffer<T>> = Vec::new();
        v.extend(self.stem_bn.buffers());
        for b in &self.encoder {
            v.extend(b.buffers());
        }
        for b in &self.decoder {
            v.extend(b.buffers());
        }
        v.extend(self.final_bn.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v: Vec<&mut Buffer<T>> = Vec::new();
        v.extend(self.stem_bn.buffers_mut());
        for b in &mut self.encoder {
            v.extend(b.buffers_mut());
        }
        for b in &mut self.decoder {
            v.extend(b.buffers_mut());
        }
        v.extend(self.final_bn.buffers_mut());
        v
    }

    fn architecture(&self) -> Architecture {
        Architecture::Linknet(self.config.clone())
    }
}
