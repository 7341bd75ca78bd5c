use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Denominator of the per-instance squared-error sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Divide by the unrolled length ρ, observed or not.
    #[default]
    SequenceLength,
    /// Divide by the number of observed steps in the instance.
    ObservedCount,
}

/// Loss and `dL/dy` of one instance, before averaging over the batch.
/// Unobserved steps are skipped entirely, so whatever the target holds there
/// (NaN included) has no effect.
pub fn instance_loss(pred: &[f64], target: &[f64], mask: &[f64], norm: LossNormalization) -> (f64, Vec<f64>) {
    let rho = pred.len();
    let denom = match norm {
        LossNormalization::SequenceLength => rho as f64,
        LossNormalization::ObservedCount => mask.iter().filter(|&&m| m != 0.0).count().max(1) as f64,
    };
    let mut loss = 0.0;
    let mut grad = vec![0.0; rho];
    for t in 0..rho {
        if mask[t] != 0.0 {
            let e = pred[t] - target[t];
            loss += mask[t] * e * e;
            grad[t] = 2.0 * mask[t] * e / denom;
        }
    }
    (loss / denom, grad)
}

/// Batch loss `mean_b (1/ρ) Σ_t mask·(y − y*)²` and its gradient with respect
/// to every prediction. Rows are instances, columns time steps.
pub fn masked_loss(pred: &Matrix, target: &Matrix, mask: &Matrix, norm: LossNormalization) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: pred {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    if mask.as_slice().iter().all(|&m| m == 0.0) {
        return Err(Error::DegenerateBatch);
    }
    let batch = pred.rows();
    let mut total = 0.0;
    let mut grad = Matrix::zeros(batch, pred.cols());
    for b in 0..batch {
        let (l, g) = instance_loss(pred.row(b), target.row(b), mask.row(b), norm);
        total += l;
        for (slot, v) in grad.row_mut(b).iter_mut().zip(g) {
            *slot = v / batch as f64;
        }
    }
    Ok((total / batch as f64, grad))
}
