//! 2x2 max pooling that remembers where each maximum came from, and the
//! matching unpooling that scatters values back to those positions.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Returns the pooled tensor and, per output element, the flat offset of the
/// winning input element. Ties go to the smallest flat offset.
pub fn maxpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddSpatialDim { h, w });
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let first = base + 2 * y * w + 2 * xx;
                let mut best = first;
                for cand in [first + 1, first + w, first + w + 1] {
                    if xd[cand] > xd[best] {
                        best = cand;
                    }
                }
                out.push(xd[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, idx))
}

pub fn maxpool2x2_backward<T: Real>(
    grad_out: &Tensor<T>,
    indices: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    maxunpool2x2(grad_out, indices, input_shape)
}

/// Scatters `x` to the recorded positions of a tensor of `out_shape`, zeros
/// elsewhere.
pub fn maxunpool2x2<T: Real>(x: &Tensor<T>, indices: &[usize], out_shape: &[usize]) -> Result<Tensor<T>> {
    if indices.len() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "unpool got {} values but {} indices",
            x.len(),
            indices.len()
        )));
    }
    let mut out = Tensor::zeros(out_shape);
    let len = out.len();
    let od = out.data_mut();
    for (&i, &v) in indices.iter().zip(x.data()) {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        od[i] += v;
    }
    Ok(out)
}

/// Gradient of [`maxunpool2x2`]: gathers from the recorded positions.
pub fn maxunpool2x2_backward<T: Real>(grad_out: &Tensor<T>, indices: &[usize], in_shape: &[usize]) -> Result<Tensor<T>> {
    let len = grad_out.len();
    let mut data = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= len {
            return Err(Error::IndexOutOfRange { index: i, len });
        }
        data.push(grad_out.data()[i]);
    }
    Tensor::new(in_shape, data)
}

#[derive(Clone, Debug, Default)]
pub struct MaxPool2x2 {
    indices: Option<Vec<usize>>,
    input_shape: Vec<usize>,
}

impl MaxPool2x2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, idx) = maxpool2x2_forward(x)?;
        self.indices = Some(idx);
        self.input_shape = x.shape().to_vec();
        Ok(y)
    }

    /// Argmax offsets from the last forward, if any.
    pub fn indices(&self) -> Option<&[usize]> {
        self.indices.as_deref()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn backward<T: Real>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let idx = self
            .indices
            .take()
            .ok_or_else(|| Error::StaleCache("maxpool has no forward cache".into()))?;
        maxpool2x2_backward(grad_out, &idx, &self.input_shape)
    }
}
