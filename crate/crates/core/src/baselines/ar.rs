use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dot, least_squares, Matrix};

pub const MAX_AR_ORDER: usize = 5;

/// `θ[t] = c + Σ α_i θ[t−i] + Σ γ_k x_k[t]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub intercept: f64,
    pub lag_coefs: Vec<f64>,
    pub exog_coefs: Vec<f64>,
    pub order: usize,
}

impl ArModel {
    fn step(&self, lags: &[f64], x: &[f64]) -> f64 {
        // lags[0] is θ[t−1]
        self.intercept + dot(&self.lag_coefs, lags) + dot(&self.exog_coefs, x)
    }
}

/// Least-squares fit using only the steps in `days` where the target and all
/// `order` lags are observed. Exogenous columns that are constant over the
/// usable rows cannot be separated from the intercept and get coefficient 0.
pub fn fit_ar(
    target: &[f64],
    mask: &[bool],
    exog: &Matrix,
    order: usize,
    days: Range<usize>,
    pixel: &str,
) -> Result<ArModel> {
    if order > MAX_AR_ORDER {
        return Err(Error::invalid(format!("AR order {order} exceeds {MAX_AR_ORDER}")));
    }
    let n = target.len();
    if mask.len() != n || exog.rows() != n || days.end > n {
        return Err(Error::invalid("target, mask and exogenous rows must have equal length"));
    }
    let r = exog.cols();
    let rows: Vec<usize> = days
        .filter(|&t| t >= order && (t - order..=t).all(|s| mask[s] && target[s].is_finite()))
        .collect();
    let params = 1 + order + r;
    if rows.len() < order + r + 2 {
        return Err(Error::UnderDetermined {
            pixel: pixel.to_string(),
            rows: rows.len(),
            params,
        });
    }
    let varying: Vec<usize> = (0..r)
        .filter(|&k| {
            let first = exog.get(rows[0], k);
            rows.iter().any(|&t| exog.get(t, k) != first)
        })
        .collect();
    let cols = 1 + order + varying.len();
    let mut design = Matrix::zeros(rows.len(), cols);
    let mut y = Vec::with_capacity(rows.len());
    for (i, &t) in rows.iter().enumerate() {
        let row = design.row_mut(i);
        row[0] = 1.0;
        for lag in 1..=order {
            row[lag] = target[t - lag];
        }
        for (j, &k) in varying.iter().enumerate() {
            row[1 + order + j] = exog.get(t, k);
        }
        y.push(target[t]);
    }
    let beta = least_squares(&design, &y).map_err(|_| Error::UnderDetermined {
        pixel: pixel.to_string(),
        rows: rows.len(),
        params,
    })?;
    let mut exog_coefs = vec![0.0; r];
    for (j, &k) in varying.iter().enumerate() {
        exog_coefs[k] = beta[1 + order + j];
    }
    Ok(ArModel {
        intercept: beta[0],
        lag_coefs: beta[1..=order].to_vec(),
        exog_coefs,
        order,
    })
}

/// Runs the recursion over every row of `exog`. Lags come from `observed`
/// where it holds a value, otherwise from the model's own previous output.
/// `warmup` supplies the last `order` values before the first row
/// (chronological).
pub fn ar_filter(model: &ArModel, exog: &Matrix, observed: &[Option<f64>], warmup: &[f64]) -> Result<Vec<f64>> {
    let p = model.order;
    if warmup.len() < p {
        return Err(Error::invalid(format!("warmup has {} values, order {p} needs {p}", warmup.len())));
    }
    if exog.cols() != model.exog_coefs.len() {
        return Err(Error::invalid(format!(
            "{} exogenous columns, model expects {}",
            exog.cols(),
            model.exog_coefs.len()
        )));
    }
    if observed.len() != exog.rows() {
        return Err(Error::invalid("observation vector length must match exogenous rows"));
    }
    // history holds the values fed back as lags, most recent last
    let mut history: Vec<f64> = warmup[warmup.len() - p..].to_vec();
    let mut out = Vec::with_capacity(exog.rows());
    let mut lags = vec![0.0; p];
    for (t, obs) in observed.iter().enumerate() {
        for (i, l) in lags.iter_mut().enumerate() {
            *l = history[history.len() - 1 - i];
        }
        let pred = model.step(&lags, exog.row(t));
        out.push(pred);
        if p > 0 {
            history.remove(0);
            history.push(obs.unwrap_or(pred));
        }
    }
    Ok(out)
}

/// Closed-loop forecast: predictions feed back as lags, no observation is
/// ever injected.
pub fn ar_forecast(model: &ArModel, exog: &Matrix, warmup: &[f64]) -> Result<Vec<f64>> {
    ar_filter(model, exog, &vec![None; exog.rows()], warmup)
}

/// How held-out error is measured during order selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArEvalMode {
    /// Observations inside the evaluation window update the lags.
    Filter,
    /// Pure forecast over the evaluation window.
    ClosedLoop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArOrderSweep {
    pub best: ArModel,
    /// Held-out RMSE per order 0..=MAX_AR_ORDER, `None` where the fit failed.
    pub errors: Vec<Option<f64>>,
}

/// Relative slack used when choosing among near-equal orders.
pub const AR_ORDER_TOLERANCE: f64 = 0.01;

/// Fits every order 0..=5 on `fit_days` and scores each by RMSE against
/// observed targets in `eval_days`. The lowest order whose RMSE is within
/// `(1 + tolerance)` of the smallest one is kept; `tolerance = 0` is a plain
/// argmin. Predictions run from day 0, seeded with the fit-window mean, and
/// take observed lags everywhere except inside a closed-loop evaluation
/// window.
pub fn select_ar_order(
    target: &[f64],
    mask: &[bool],
    exog: &Matrix,
    fit_days: Range<usize>,
    eval_days: Range<usize>,
    mode: ArEvalMode,
    tolerance: f64,
    pixel: &str,
) -> Result<ArOrderSweep> {
    let mut errors = Vec::with_capacity(MAX_AR_ORDER + 1);
    let mut models = Vec::with_capacity(MAX_AR_ORDER + 1);
    let observed: Vec<Option<f64>> = target
        .iter()
        .zip(mask)
        .map(|(&v, &m)| (m && v.is_finite()).then_some(v))
        .collect();
    let observed_mean = {
        let obs: Vec<f64> = observed[fit_days.clone()].iter().flatten().copied().collect();
        crate::kernel::mean(&obs)
    };
    let mut last_err = None;
    for p in 0..=MAX_AR_ORDER {
        let model = match fit_ar(target, mask, exog, p, fit_days.clone(), pixel) {
            Ok(m) => m,
            Err(e) => {
                errors.push(None);
                last_err = Some(e);
                continue;
            }
        };
        let window = exog.slice_rows(0, eval_days.end);
        let mut obs = observed[..eval_days.end].to_vec();
        if mode == ArEvalMode::ClosedLoop {
            obs[eval_days.clone()].iter_mut().for_each(|o| *o = None);
        }
        let pred = ar_filter(&model, &window, &obs, &vec![observed_mean; p])?;
        let (mut se, mut count) = (0.0, 0usize);
        for t in eval_days.clone() {
            if let Some(v) = observed[t] {
                se += (pred[t] - v).powi(2);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid(format!("pixel {pixel}: no observations in the evaluation window")));
        }
        let rmse = (se / count as f64).sqrt();
        errors.push(Some(rmse));
        models.push((rmse, model));
    }
    let Some(min) = models.iter().map(|(e, _)| *e).min_by(f64::total_cmp) else {
        return Err(last_err.unwrap());
    };
    let (_, best) = models
        .into_iter()
        .find(|(e, _)| *e <= min * (1.0 + tolerance))
        .unwrap();
    Ok(ArOrderSweep { best, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(c: f64, alpha: &[f64]) -> ArModel {
        ArModel {
            intercept: c,
            lag_coefs: alpha.to_vec(),
            exog_coefs: vec![],
            order: alpha.len(),
        }
    }

    #[test]
    fn unit_root_holds_state() {
        let out = ar_forecast(&model(0.0, &[1.0]), &Matrix::zeros(50, 0), &[0.3]).unwrap();
        assert!(out.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn forecast_decays_to_fixed_point() {
        let (c, a) = (0.1, 0.6);
        let out = ar_forecast(&model(c, &[a]), &Matrix::zeros(200, 0), &[0.9]).unwrap();
        let fixed = c / (1.0 - a);
        for (t, v) in out.iter().enumerate() {
            // closed form: fixed + a^(t+1) (θ0 − fixed)
            let expected = fixed + a.powi(t as i32 + 1) * (0.9 - fixed);
            assert!((v - expected).abs() < 1e-12);
        }
        assert!((out[199] - fixed).abs() < 1e-12);
    }

    #[test]
    fn order_zero_forecast_is_exogenous_only() {
        let m = ArModel {
            intercept: 0.5,
            lag_coefs: vec![],
            exog_coefs: vec![2.0, -1.0],
            order: 0,
        };
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(ar_forecast(&m, &x, &[]).unwrap(), vec![2.5, -0.5, 1.5]);
    }

    #[test]
    fn short_warmup_rejected() {
        assert!(ar_forecast(&model(0.0, &[0.5, 0.2]), &Matrix::zeros(3, 0), &[0.1]).is_err());
    }

    #[test]
    fn gaps_drop_rows() {
        let n = 40;
        let target: Vec<f64> = (0..n).map(|t| 0.2 + 0.01 * (t % 7) as f64).collect();
        let mask: Vec<bool> = (0..n).map(|t| t % 2 == 0).collect();
        // every other day observed: no row has its lag observed
        let err = fit_ar(&target, &mask, &Matrix::zeros(n, 0), 1, 0..n, "px7").unwrap_err();
        assert!(matches!(err, Error::UnderDetermined { ref pixel, rows: 0, .. } if pixel == "px7"));
        assert!(fit_ar(&target, &mask, &Matrix::zeros(n, 0), 0, 0..n, "px7").is_ok());
    }

    #[test]
    fn constant_exogenous_column_is_ignored() {
        let n = 30;
        let x = Matrix::from_vec(n, 2, (0..n).flat_map(|t| [t as f64, 4.0]).collect()).unwrap();
        let target: Vec<f64> = (0..n).map(|t| 0.1 + 0.01 * t as f64).collect();
        let m = fit_ar(&target, &vec![true; n], &x, 0, 0..n, "p").unwrap();
        assert_eq!(m.exog_coefs[1], 0.0);
        assert!((m.exog_coefs[0] - 0.01).abs() < 1e-12);
    }
}
