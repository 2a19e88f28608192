//! L2 loss.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Mean squared error over all elements, with its gradient w.r.t. `pred`:
/// `d loss / d pred = 2 (pred - target) / numel`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            context: "mse_loss",
            expected: format!("{:?}", pred.shape()),
            got: format!("{:?}", target.shape()),
        });
    }
    let n = pred.numel() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.numel()];
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        loss += d * d;
        grad[i] = 2.0 * d / n;
    }
    Ok((loss / n, Tensor::from_vec(pred.shape(), grad)?))
}
