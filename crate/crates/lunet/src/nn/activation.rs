use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `max(0, x)`.
pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes the gradient where the input was strictly positive; the
/// subgradient at 0 is 0.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.check_same_shape(x)?;
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::new(grad_out.shape(), data)
}

/// Logistic function evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// Gradient through the logistic given its forward output `y`.
pub fn sigmoid_backward<T: Real>(grad_out: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.check_same_shape(y)?;
    let data = grad_out
        .data()
        .iter()
        .zip(y.data())
        .map(|(&g, &s)| T::from_f64(g.to_f64() * s.to_f64() * (1.0 - s.to_f64())))
        .collect();
    Tensor::new(grad_out.shape(), data)
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T: Real> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = relu_forward(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache("relu has no forward cache".into()))?;
        relu_backward(grad_out, &x)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T: Real> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(sigmoid);
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache("sigmoid has no forward cache".into()))?;
        sigmoid_backward(grad_out, &y)
    }
}
