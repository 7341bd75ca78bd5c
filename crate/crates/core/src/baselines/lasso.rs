use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_finite, dot, Matrix};

pub const LASSO_TOLERANCE: f64 = 1e-10;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// false when the sweep limit was hit first
    pub converged: bool,
    pub sweeps: usize,
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    z.signum() * (z.abs() - lambda).max(0.0)
}

/// Minimizes `(1/2N)‖y − β0 − Xβ‖² + λ‖β‖₁` by cyclic coordinate descent on
/// the centered Gram matrix. The intercept is not penalized.
pub fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<LassoModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::invalid(format!("lasso needs at least 2 samples, got {n}")));
    }
    if y.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !all_finite(x.as_slice()) || !all_finite(y) {
        return Err(Error::invalid("NaN or infinite value in lasso inputs"));
    }
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&x_mean) {
            *v -= m;
        }
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // gram = XcᵀXc / N, q = Xcᵀ(yc − Xcβ) / N
    let mut gram = Matrix::zeros(d, d);
    let mut q = vec![0.0; d];
    for i in 0..n {
        let row = centered.row(i);
        gram.outer_acc(row, row);
        for (qj, &v) in q.iter_mut().zip(row) {
            *qj += v * yc[i];
        }
    }
    gram.as_mut_slice().iter_mut().for_each(|v| *v /= nf);
    q.iter_mut().for_each(|v| *v /= nf);

    let mut beta = vec![0.0; d];
    let mut sweeps = 0;
    let mut converged = d == 0;
    while !converged && sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            let g = gram.get(j, j);
            if g <= 0.0 {
                continue;
            }
            let z = q[j] + g * beta[j];
            let new = soft_threshold(z, lambda) / g;
            let delta = new - beta[j];
            if delta != 0.0 {
                for (k, qk) in q.iter_mut().enumerate() {
                    *qk -= gram.get(k, j) * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        converged = max_change < LASSO_TOLERANCE;
    }
    if !converged {
        log::warn!("lasso did not converge within {LASSO_MAX_SWEEPS} sweeps");
    }
    Ok(LassoModel {
        intercept: y_mean - dot(&x_mean, &beta),
        coefficients: beta,
        lambda,
        converged,
        sweeps,
    })
}

impl LassoModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coefficients.len() {
            return Err(Error::invalid(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.coefficients.len()
            )));
        }
        Ok((0..x.rows()).map(|i| self.intercept + dot(x.row(i), &self.coefficients)).collect())
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_penalty_shrinks_everything() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let y = [1.0, 2.0, 0.5, -0.5];
        let m = fit_lasso(&x, &y, 1e3).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert!((m.intercept - 0.75).abs() < 1e-15);
    }

    #[test]
    fn no_predictors_gives_mean() {
        let x = Matrix::zeros(3, 0);
        let m = fit_lasso(&x, &[1.0, 2.0, 3.0], 0.1).unwrap();
        assert!(m.converged);
        assert!((m.intercept - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(fit_lasso(&x, &[1.0], 0.0).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        assert!(fit_lasso(&x, &[1.0, 2.0], 0.0).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(fit_lasso(&x, &[1.0, 2.0], -1.0).is_err());
        let m = fit_lasso(&x, &[1.0, 2.0], 0.0).unwrap();
        assert!(m.predict(&Matrix::zeros(1, 2)).is_err());
    }
}
