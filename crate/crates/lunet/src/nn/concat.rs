use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Concatenates two `[N, C, H, W]` tensors along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::ShapeMismatch(format!(
            "concat {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let p = ha * wa;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..na {
        data.extend_from_slice(&a.data()[n * ca * p..(n + 1) * ca * p]);
        data.extend_from_slice(&b.data()[n * cb * p..(n + 1) * cb * p]);
    }
    Tensor::new(&[na, ca + cb, ha, wa], data)
}

/// Splits a channel-concatenated gradient back into its `first`-channel head
/// and the remainder.
pub fn split_channels<T: Real>(g: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = g.dims4()?;
    if first > c {
        return Err(Error::ShapeMismatch(format!(
            "cannot split {first} channels from {c}"
        )));
    }
    let p = h * w;
    let rest = c - first;
    let mut a = Vec::with_capacity(n * first * p);
    let mut b = Vec::with_capacity(n * rest * p);
    for ni in 0..n {
        let img = &g.data()[ni * c * p..(ni + 1) * c * p];
        a.extend_from_slice(&img[..first * p]);
        b.extend_from_slice(&img[first * p..]);
    }
    Ok((
        Tensor::new(&[n, first, h, w], a)?,
        Tensor::new(&[n, rest, h, w], b)?,
    ))
}

/// Elementwise sum of two equal-shape tensors.
pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}
