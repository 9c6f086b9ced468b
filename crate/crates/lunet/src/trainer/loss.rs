use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Predictions are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over all elements and its gradient with respect
/// to the predictions.
///
/// The gradient is `(p - y) / (p (1 - p) N)` evaluated at the clamped
/// prediction, so saturated outputs still receive a finite push back.
pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        let p = p.to_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = y.to_f64();
        sum += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push(T::from_f64((p - y) / (p * (1.0 - p) * n)));
    }
    let loss = -sum / n;
    if !loss.is_finite() {
        return Err(Error::NumericalFault(format!("binary cross-entropy is {loss}")));
    }
    Ok((loss, Tensor::new(pred.shape(), grad)?))
}
