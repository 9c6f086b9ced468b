//! Common surface of the trainable segmentation networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::linknet::{LinkNetConfig, LinkNetLite};
use crate::error::Result;
use crate::nn::{BatchNorm2d, Buffer, Conv2d, Mode, Param, Relu};
use crate::tensor::{Real, Tensor};
use crate::unet::{UNet, UNetConfig};

/// A network mapping `[N, 1, H, W]` images to `[N, 1, H, W]` foreground
/// probabilities, with parameters and buffers exposed in a fixed build order.
pub trait SegmentationModel<T: Real> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Accumulates parameter gradients for the last forward pass.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<()>;

    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
    fn buffers(&self) -> Vec<&Buffer<T>>;
    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>>;
    fn architecture(&self) -> Architecture;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Unet(UNetConfig),
    Linknet(LinkNetConfig),
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Unet(_) => "U-Net",
            Architecture::Linknet(_) => "LinkNet",
        }
    }

    pub fn input_hw(&self) -> (usize, usize) {
        match self {
            Architecture::Unet(c) => c.input_hw,
            Architecture::Linknet(c) => c.input_hw,
        }
    }

    pub fn build<T: Real>(&self) -> Result<AnyModel<T>> {
        Ok(match self {
            Architecture::Unet(c) => AnyModel::Unet(UNet::build(c.clone())?),
            Architecture::Linknet(c) => AnyModel::Linknet(LinkNetLite::build(c.clone())?),
        })
    }
}

/// Either trainable network, dispatched dynamically.
#[derive(Clone, Debug)]
pub enum AnyModel<T: Real> {
    Unet(UNet<T>),
    Linknet(LinkNetLite<T>),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Unet($m) => $e,
            AnyModel::Linknet($m) => $e,
        }
    };
}

impl<T: Real> SegmentationModel<T> for AnyModel<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        dispatch!(self, m => m.forward(x, mode))
    }
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<()> {
        dispatch!(self, m => m.backward(grad_out))
    }
    fn params(&self) -> Vec<&Param<T>> {
        dispatch!(self, m => m.params())
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        dispatch!(self, m => m.params_mut())
    }
    fn buffers(&self) -> Vec<&Buffer<T>> {
        dispatch!(self, m => m.buffers())
    }
    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        dispatch!(self, m => m.buffers_mut())
    }
    fn architecture(&self) -> Architecture {
        dispatch!(self, m => m.architecture())
    }
}

/// conv3x3 -> BN -> ReLU, twice.
#[derive(Clone, Debug)]
pub struct ConvBlock<T: Real> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    relu2: Relu<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new<R: Rng>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        ConvBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout),
            relu1: Relu::new(),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout),
            relu2: Relu::new(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv1.forward(x)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.relu1.forward(&h);
        let h = self.conv2.forward(&h)?;
        let h = self.bn2.forward(&h, mode)?;
        Ok(self.relu2.forward(&h))
    }

    pub fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu2.backward(g)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.conv1.backward(&g)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.conv1.params());
        v.extend(self.bn1.params());
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.conv1.params_mut());
        v.extend(self.bn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        v
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v = Vec::with_capacity(4);
        v.extend(self.bn1.buffers());
        v.extend(self.bn2.buffers());
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v = Vec::with_capacity(4);
        v.extend(self.bn1.buffers_mut());
        v.extend(self.bn2.buffers_mut());
        v
    }
}
