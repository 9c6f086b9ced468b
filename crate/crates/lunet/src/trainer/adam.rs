//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter in the order
/// the parameters are presented to [`AdamState::step`].
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<Tensor<f64>>,
    pub v: Vec<Tensor<f64>>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            ..Default::default()
        }
    }

    /// Applies one update to every parameter from its accumulated gradient.
    pub fn step<T: Real>(&mut self, params: &mut [&mut Param<T>], lr: f64) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.shape() != self.m[i].shape() || p.grad.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: parameter {:?}, gradient {:?}, moments {:?}",
                    p.name,
                    p.value.shape(),
                    p.grad.shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.t += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let grad = p.grad.data().to_vec();
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[k].to_f64();
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w = T::from_f64(w.to_f64() - lr * mhat / (vhat.sqrt() + eps));
            }
        }
        Ok(())
    }
}

/// Convenience wrapper for a single step on a fresh or existing state.
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(params, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("w", Tensor::full(&[1], w));
        p.grad = Tensor::full(&[1], g);
        p
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(0.0, 1.0);
        let mut st = AdamState::new(AdamHyper::default());
        adam_step(&mut [&mut p], &mut st, 1e-4).unwrap();
        let expected = -1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((p.value.data()[0] - expected).abs() < 1e-18);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut p = scalar(0.3, 0.0);
        let mut st = AdamState::new(AdamHyper::default());
        st.step(&mut [&mut p], 1e-3).unwrap();
        st.step(&mut [&mut p], 1e-3).unwrap();
        assert_eq!(p.value.data()[0], 0.3);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = scalar(-1.25, 3.0);
        let mut st = AdamState::new(AdamHyper::default());
        st.step(&mut [&mut p], 0.0).unwrap();
        assert_eq!(p.value.data()[0], -1.25);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let mut p = scalar(0.0, 0.37);
        let mut st = AdamState::new(AdamHyper::default());
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p.value.data()[0];
            st.step(&mut [&mut p], lr).unwrap();
            last = before - p.value.data()[0];
        }
        assert!((last - lr).abs() < 1e-6 * lr + 1e-10, "{last}");
    }

    #[test]
    fn shape_change_rejected() {
        let mut a = scalar(0.0, 1.0);
        let mut st = AdamState::new(AdamHyper::default());
        st.step(&mut [&mut a], 1e-3).unwrap();
        let mut b = Param::new("b", Tensor::<f64>::zeros(&[2]));
        assert!(matches!(st.step(&mut [&mut b], 1e-3), Err(Error::ShapeMismatch(_))));
    }
}
