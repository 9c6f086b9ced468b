//! Layer primitives with hand-written backward passes.
//!
//! Every layer owns its parameters and a cache filled by `forward`. A
//! `backward` call consumes that cache, so a second backward without a fresh
//! forward is reported as [`Error::StaleCache`](crate::Error::StaleCache).
//! Parameter gradients are accumulated (`+=`) into [`Param::grad`]; callers
//! zero them between optimizer steps.

mod activation;
mod batchnorm;
mod concat;
mod conv;
mod pool;
mod tconv;

pub use activation::{relu_backward, relu_forward, sigmoid, sigmoid_backward, Relu, Sigmoid};
pub use batchnorm::{BatchNorm2d, BN_EPSILON, BN_MOMENTUM};
pub use concat::{add, concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_direct, Conv2d, ConvGrads};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, maxunpool2x2, maxunpool2x2_backward, MaxPool2x2};
pub use tconv::{tconv2x2_backward, tconv2x2_forward, ConvTranspose2x2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with a gradient slot of identical shape.
#[derive(Clone, Debug)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }

    pub(crate) fn accumulate(&mut self, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.grad.len());
        for (g, &d) in self.grad.data_mut().iter_mut().zip(grad) {
            *g = T::from_f64(g.to_f64() + d);
        }
    }
}

/// A non-learnable named tensor (batch-norm running statistics).
#[derive(Clone, Debug)]
pub struct Buffer<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Draws a He-uniform tensor: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<T: Real, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-limit..=limit)))
}

/// Records the order layers ran in during a forward pass so the backward pass
/// can check it is unwinding them in exactly the reverse order.
#[derive(Clone, Debug, Default)]
pub struct GradTape {
    entries: Vec<usize>,
}

impl GradTape {
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn record(&mut self, layer: usize) {
        self.entries.push(layer);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pop_expect(&mut self, layer: usize) -> Result<()> {
        match self.entries.pop() {
            Some(id) if id == layer => Ok(()),
            Some(id) => Err(Error::StaleCache(format!(
                "backward reached layer {layer} but tape expected layer {id}"
            ))),
            None => Err(Error::StaleCache(format!(
                "backward reached layer {layer} with an empty tape"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_enforces_reverse_order() {
        let mut tape = GradTape::default();
        tape.record(0);
        tape.record(1);
        assert!(tape.pop_expect(1).is_ok());
        assert!(matches!(tape.pop_expect(1), Err(Error::StaleCache(_))));
        assert!(matches!(tape.pop_expect(0), Err(Error::StaleCache(_))));
    }
}
