use std::ops::Range;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::run::{fit_model, predict_split, ExperimentConfig, ModelFailure};
use super::split::{DateWindow, Split};
use crate::container::{ModelContainer, ModelKind};
use crate::dataset::{generate_synthetic, FeatureLayout, GridDataset, PixelTimeSet, SyntheticConfig};
use crate::error::{Error, Result};
use crate::kernel::median;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HindcastConfig {
    pub synthetic: SyntheticConfig,
    /// trailing years whose noisy targets are used for training
    pub train_years: u32,
    /// length of each scored hindcast window
    pub window_years: u32,
    pub experiment: ExperimentConfig,
    /// static attributes as extra inputs (forcings only otherwise)
    pub include_attributes: bool,
}

impl Default for HindcastConfig {
    fn default() -> Self {
        HindcastConfig {
            synthetic: SyntheticConfig {
                rows: 16,
                cols: 16,
                years: 12,
                ..Default::default()
            },
            train_years: 2,
            window_years: 2,
            experiment: ExperimentConfig {
                models: vec![ModelKind::Lstm, ModelKind::ArP],
                ..Default::default()
            },
            include_attributes: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindcastWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindcastModelResult {
    pub model: ModelKind,
    /// RMSE against the clean series, `[window][pixel]`; NaN where the
    /// pixel could not be predicted
    pub window_rmse: Vec<Vec<f64>>,
    pub window_medians: Vec<Option<f64>>,
    /// RMSE over the whole hindcast period per pixel
    pub pixel_rmse: Vec<f64>,
    pub median_rmse: Option<f64>,
    pub n_failed_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindcastReport {
    pub train: DateWindow,
    /// earliest first
    pub windows: Vec<HindcastWindow>,
    pub pixel_ids: Vec<String>,
    pub results: Vec<HindcastModelResult>,
    pub failures: Vec<ModelFailure>,
}

impl HindcastReport {
    pub fn result(&self, model: ModelKind) -> Option<&HindcastModelResult> {
        self.results.iter().find(|r| r.model == model)
    }
}

fn add_years(d: NaiveDate, years: i64) -> NaiveDate {
    if years >= 0 {
        d.checked_add_months(Months::new(12 * years as u32)).expect("date overflow")
    } else {
        d.checked_sub_months(Months::new(12 * (-years) as u32)).expect("date overflow")
    }
}

/// Training window (trailing `train_years`) and the complete
/// `window_years`-long windows that precede it, earliest first.
pub fn hindcast_windows(dataset: &GridDataset, train_years: u32, window_years: u32) -> Result<(DateWindow, Vec<HindcastWindow>)> {
    if train_years == 0 || window_years == 0 {
        return Err(Error::invalid("train and window lengths must be positive"));
    }
    let end = dataset.date(dataset.n_days - 1) + chrono::Duration::days(1);
    let train_start = add_years(end, -(train_years as i64));
    if train_start <= dataset.start_date {
        return Err(Error::invalid("record too short for the training window"));
    }
    let train = DateWindow::new(train_start, end - chrono::Duration::days(1));
    let mut windows = Vec::new();
    let mut hi = train_start;
    loop {
        let lo = add_years(hi, -(window_years as i64));
        if lo < dataset.start_date {
            break;
        }
        let days = dataset.day_index(lo).unwrap()..dataset.day_index(hi).unwrap();
        windows.push(HindcastWindow {
            start: lo,
            end: hi - chrono::Duration::days(1),
            days,
        });
        hi = lo;
    }
    if windows.is_empty() {
        return Err(Error::invalid("no complete hindcast window precedes the training window"));
    }
    windows.reverse();
    Ok((train, windows))
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    (pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64).sqrt()
}

/// Scores an already-fitted model against the clean series.
pub fn score_hindcast(
    model: ModelKind,
    predictor: &dyn super::run::Predictor,
    dataset: &GridDataset,
    split: &Split,
    windows: &[HindcastWindow],
) -> Result<HindcastModelResult> {
    let preds = predict_split(predictor, dataset, split);
    let mut window_rmse = vec![Vec::with_capacity(dataset.pixels.len()); windows.len()];
    let mut pixel_rmse = Vec::with_capacity(dataset.pixels.len());
    let mut failed = 0;
    let all = windows[0].days.start..windows[windows.len() - 1].days.end;
    for (p, px) in dataset.pixels.iter().enumerate() {
        let truth = px
            .truth
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("pixel {} has no clean series", px.id)))?;
        match preds.get(&p) {
            Some(Ok(pred)) => {
                for (w, win) in windows.iter().enumerate() {
                    window_rmse[w].push(rmse(&pred[win.days.clone()], &truth[win.days.clone()]));
                }
                pixel_rmse.push(rmse(&pred[all.clone()], &truth[all.clone()]));
            }
            _ => {
                failed += 1;
                window_rmse.iter_mut().for_each(|w| w.push(f64::NAN));
                pixel_rmse.push(f64::NAN);
            }
        }
    }
    let finite = |v: &[f64]| -> Vec<f64> { v.iter().copied().filter(|x| x.is_finite()).collect() };
    Ok(HindcastModelResult {
        model,
        window_medians: window_rmse.iter().map(|w| median(&finite(w))).collect(),
        median_rmse: median(&finite(&pixel_rmse)),
        window_rmse,
        pixel_rmse,
        n_failed_pixels: failed,
    })
}

/// Trains on the trailing years of a dataset with clean series and predicts
/// the earlier years without any observation, scoring each window.
pub fn run_hindcast_on(dataset: &GridDataset, config: &HindcastConfig) -> Result<(HindcastReport, Vec<ModelContainer>)> {
    let (train, windows) = hindcast_windows(dataset, config.train_years, config.window_years)?;
    let all: Vec<usize> = (0..dataset.pixels.len()).collect();
    let split = Split {
        train: PixelTimeSet::new(all.clone(), train.days(dataset)?),
        test: PixelTimeSet::new(all, windows[0].days.start..windows[windows.len() - 1].days.end),
    };
    let experiment = ExperimentConfig {
        features: Some(config.experiment.features.unwrap_or(FeatureLayout {
            forcings: true,
            attributes: config.include_attributes,
            lsm: false,
        })),
        ..config.experiment.clone()
    };
    let mut report = HindcastReport {
        train,
        windows: windows.clone(),
        pixel_ids: dataset.pixels.iter().map(|p| p.id.clone()).collect(),
        results: Vec::new(),
        failures: Vec::new(),
    };
    let mut models = Vec::new();
    for &kind in &experiment.models {
        let fitted = fit_model(kind, dataset, &split, &experiment)
            .and_then(|c| score_hindcast(kind, &c, dataset, &split, &windows).map(|r| (c, r)));
        match fitted {
            Ok((c, r)) => {
                report.results.push(r);
                models.push(c);
            }
            Err(e) => report.failures.push(ModelFailure {
                model: kind,
                message: e.to_string(),
            }),
        }
    }
    Ok((report, models))
}

pub fn run_hindcast_experiment(config: &HindcastConfig) -> Result<HindcastReport> {
    let dataset = generate_synthetic(&config.synthetic)?;
    Ok(run_hindcast_on(&dataset, config)?.0)
}
