use serde::{Deserialize, Serialize};

use crate::container::ModelKind;
use crate::error::{Error, Result};
use crate::kernel::percentile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub bias: f64,
    pub rmse: f64,
    /// `None` when either series is constant over the observed steps
    pub r: Option<f64>,
    pub n_obs: usize,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let scale = ma.abs().max(mb.abs()).max(1.0);
    if va.sqrt() <= 1e-12 * scale || vb.sqrt() <= 1e-12 * scale {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Bias, RMSE and Pearson R over the observed steps.
pub fn compute_metrics(pred: &[f64], obs: &[f64], mask: &[bool]) -> Result<PixelMetrics> {
    if pred.len() != obs.len() || obs.len() != mask.len() {
        return Err(Error::invalid("prediction, observation and mask lengths differ"));
    }
    let (p, o): (Vec<f64>, Vec<f64>) = pred
        .iter()
        .zip(obs)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &o), _)| (p, o))
        .unzip();
    if p.is_empty() {
        return Err(Error::MetricsUndefined("no observed steps".into()));
    }
    if !p.iter().chain(&o).all(|v| v.is_finite()) {
        return Err(Error::MetricsUndefined("non-finite prediction or observation".into()));
    }
    let n = p.len() as f64;
    let errors: Vec<f64> = p.iter().zip(&o).map(|(a, b)| a - b).collect();
    let bias = errors.iter().sum::<f64>() / n;
    let spread = errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / n;
    Ok(PixelMetrics {
        bias,
        rmse: (bias * bias + spread).sqrt(),
        r: pearson(&p, &o),
        n_obs: p.len(),
    })
}

/// Subtracts, per calendar month, the mean over the observed steps of that
/// month. Unobserved steps are left as they are.
pub fn monthly_anomalies(values: &[f64], mask: &[bool], months: &[u32]) -> Vec<f64> {
    let mut sum = [0.0; 12];
    let mut count = [0usize; 12];
    for ((v, &m), &month) in values.iter().zip(mask).zip(months) {
        if m {
            sum[month as usize - 1] += v;
            count[month as usize - 1] += 1;
        }
    }
    values
        .iter()
        .zip(mask)
        .zip(months)
        .map(|((v, &m), &month)| {
            let k = month as usize - 1;
            if m && count[k] > 0 {
                v - sum[k] / count[k] as f64
            } else {
                *v
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Percentiles {
            p25: percentile(values, 25.0)?,
            p50: percentile(values, 50.0)?,
            p75: percentile(values, 75.0)?,
            p90: percentile(values, 90.0)?,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.p75 - self.p25
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelRecord {
    pub pixel_id: String,
    pub row: usize,
    pub col: usize,
    pub metrics: Option<PixelMetrics>,
    /// why the pixel was excluded
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub bias: Option<Percentiles>,
    pub rmse: Option<Percentiles>,
    pub r: Option<Percentiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub phase: Phase,
    pub split: String,
    pub pixels: Vec<PixelRecord>,
    pub summary: MetricSummary,
    pub n_pixels: usize,
    pub n_evaluable: usize,
    pub n_excluded: usize,
    pub n_r_undefined: usize,
}

impl MetricsReport {
    pub fn from_records(model: ModelKind, phase: Phase, split: String, pixels: Vec<PixelRecord>) -> Self {
        let evaluable: Vec<&PixelMetrics> = pixels.iter().filter_map(|p| p.metrics.as_ref()).collect();
        let bias: Vec<f64> = evaluable.iter().map(|m| m.bias).collect();
        let rmse: Vec<f64> = evaluable.iter().map(|m| m.rmse).collect();
        let r: Vec<f64> = evaluable.iter().filter_map(|m| m.r).collect();
        MetricsReport {
            model,
            phase,
            split,
            n_pixels: pixels.len(),
            n_evaluable: evaluable.len(),
            n_excluded: pixels.len() - evaluable.len(),
            n_r_undefined: evaluable.len() - r.len(),
            summary: MetricSummary {
                bias: Percentiles::of(&bias),
                rmse: Percentiles::of(&rmse),
                r: Percentiles::of(&r),
            },
            pixels,
        }
    }

    pub fn median_rmse(&self) -> Option<f64> {
        self.summary.rmse.map(|p| p.p50)
    }
}
