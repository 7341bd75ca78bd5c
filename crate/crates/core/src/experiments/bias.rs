use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::metrics::Percentiles;
use crate::dataset::{GridDataset, PixelTimeSet};
use crate::error::{Error, Result};
use crate::kernel::mean;

pub const BIAS_PROBE_THRESHOLD: f64 = 0.25;
pub const BIAS_PROBE_MESSAGE: &str = "possible biased training sample";

/// Time mean of `prediction − lsm` over `days`.
pub fn self_assessed_bias(prediction: &[f64], lsm: Option<&[f64]>, days: Range<usize>) -> Result<f64> {
    let lsm = lsm.ok_or_else(|| Error::MetricsUndefined("no lsm series for this pixel".into()))?;
    if days.is_empty() || days.end > prediction.len() || days.end > lsm.len() {
        return Err(Error::invalid("window outside the prediction or lsm series"));
    }
    let diffs: Vec<f64> = days.map(|t| prediction[t] - lsm[t]).collect();
    Ok(mean(&diffs))
}

/// Compares the corrections a model applies to the lsm channel on test
/// pixels with the corrections the training data actually called for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasProbe {
    /// `[min, max]` over training pixels of mean(observed − lsm)
    pub training_range: [f64; 2],
    pub training: Percentiles,
    pub self_assessed: Percentiles,
    /// share of test pixels whose self-assessed bias falls outside
    /// `training_range`
    pub outside_fraction: f64,
    pub threshold: f64,
    pub flagged: bool,
    pub message: Option<String>,
}

/// `predictions` holds full-record predictions for the test pixels, in the
/// order of `test.pixels`.
pub fn bias_probe(
    dataset: &GridDataset,
    train: &PixelTimeSet,
    test: &PixelTimeSet,
    predictions: &[Option<Vec<f64>>],
    threshold: f64,
) -> Result<BiasProbe> {
    if !dataset.has_lsm() {
        return Err(Error::MetricsUndefined("dataset has no lsm channel".into()));
    }
    let mut training = Vec::new();
    for &p in &train.pixels {
        let px = &dataset.pixels[p];
        let lsm = px.lsm.as_ref().unwrap();
        let d: Vec<f64> = train
            .days
            .clone()
            .filter(|&t| px.mask[t])
            .map(|t| px.target[t] - lsm[t])
            .collect();
        if !d.is_empty() {
            training.push(mean(&d));
        }
    }
    let mut assessed = Vec::new();
    for (&p, pred) in test.pixels.iter().zip(predictions) {
        if let Some(pred) = pred {
            let lsm = dataset.pixels[p].lsm.as_deref();
            assessed.push(self_assessed_bias(pred, lsm, test.days.clone())?);
        }
    }
    let (Some(train_pct), Some(test_pct)) = (Percentiles::of(&training), Percentiles::of(&assessed)) else {
        return Err(Error::MetricsUndefined("no observed training pixel or no predicted test pixel".into()));
    };
    let lo = training.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = training.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let outside = assessed.iter().filter(|&&b| b < lo || b > hi).count() as f64 / assessed.len() as f64;
    let flagged = outside > threshold;
    Ok(BiasProbe {
        training_range: [lo, hi],
        training: train_pct,
        self_assessed: test_pct,
        outside_fraction: outside,
        threshold,
        flagged,
        message: flagged.then(|| BIAS_PROBE_MESSAGE.to_string()),
    })
}
