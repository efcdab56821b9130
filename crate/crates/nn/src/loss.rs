//! Mean squared error, `(1/n) Σ (y − ŷ)²` over every element.

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

fn check(y: &Tensor, y_hat: &Tensor) -> Result<()> {
    if y.shape() != y_hat.shape() {
        return Err(NnError::ShapeMismatch {
            expected: y.shape().to_vec(),
            actual: y_hat.shape().to_vec(),
        });
    }
    Ok(())
}

/// Sums in `f64` so the result does not depend on accumulation drift.
pub fn mse_loss(y: &Tensor, y_hat: &Tensor) -> Result<f32> {
    check(y, y_hat)?;
    Ok(mse(y.data(), y_hat.data()))
}

pub fn mse(y: &[f32], y_hat: &[f32]) -> f32 {
    if y.is_empty() {
        return 0.0;
    }
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let d = (*a as f64) - (*b as f64);
            d * d
        })
        .sum();
    (sum / y.len() as f64) as f32
}

/// Gradient of [`mse_loss`] with respect to `y_hat`.
pub fn mse_grad(y: &Tensor, y_hat: &Tensor) -> Result<Tensor> {
    check(y, y_hat)?;
    let scale = 2.0 / y.len().max(1) as f32;
    let data = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(a, b)| scale * (b - a))
        .collect();
    Tensor::new(y_hat.shape().to_vec(), data)
}
