use std::collections::BTreeMap;
use std::path::Path;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bias::{bias_probe, BiasProbe, BIAS_PROBE_THRESHOLD};
use super::metrics::{compute_metrics, monthly_anomalies, MetricsReport, Phase, PixelRecord};
use super::split::{make_split, Split, SplitSpec};
use crate::baselines::{
    fit_ffnn, fit_lasso, select_ar_order, ArEvalMode, FfnnOptions, AR_ORDER_TOLERANCE, DEFAULT_LAMBDA, POINT_HIDDEN,
};
use crate::container::{ArPixel, ModelContainer, ModelKind, ModelPayload};
use crate::dataset::{FeatureLayout, GridDataset, NormalizationStats, PixelTimeSet};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::kernel::{mean, Matrix};
use crate::training::{train_lstm, TrainingConfig};

pub const AR_PROTOCOL_NOTE: &str =
    "ar_p lag order chosen per pixel by test-window error (optimistic protocol); exogenous inputs normalized like the lstm inputs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    pub training: TrainingConfig,
    pub lasso_lambda: f64,
    /// options for the grid-wide network
    pub ffnn: FfnnOptions,
    pub ffnn_point_hidden: usize,
    pub ar_eval: ArEvalMode,
    pub ar_tolerance: f64,
    /// `None`: every channel the dataset provides
    pub features: Option<FeatureLayout>,
    /// Pearson R on monthly anomalies instead of raw series
    pub anomaly_correlation: bool,
    pub bias_probe_threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec![ModelKind::Lstm],
            training: TrainingConfig::default(),
            lasso_lambda: DEFAULT_LAMBDA,
            ffnn: FfnnOptions::default(),
            ffnn_point_hidden: POINT_HIDDEN,
            ar_eval: ArEvalMode::ClosedLoop,
            ar_tolerance: AR_ORDER_TOLERANCE,
            features: None,
            anomaly_correlation: false,
            bias_probe_threshold: BIAS_PROBE_THRESHOLD,
        }
    }
}

impl ExperimentConfig {
    /// Input channels used for `dataset`.
    pub fn layout(&self, dataset: &GridDataset) -> FeatureLayout {
        self.features.unwrap_or(FeatureLayout {
            forcings: true,
            attributes: !dataset.attribute_names.is_empty(),
            lsm: dataset.has_lsm(),
        })
    }
}

/// Anything that can produce a full-record prediction for a pixel.
pub trait Predictor: Sync {
    fn predict_pixel(&self, dataset: &GridDataset, index: usize) -> Result<Vec<f64>>;
}

impl Predictor for ModelContainer {
    fn predict_pixel(&self, dataset: &GridDataset, index: usize) -> Result<Vec<f64>> {
        ModelContainer::predict_pixel(self, dataset, index)
    }
}

/// Observed (input row, target) pairs of one pixel inside `set.days`.
fn observed_rows(dataset: &GridDataset, stats: &NormalizationStats, pixel: usize, set: &PixelTimeSet) -> Result<(Matrix, Vec<f64>)> {
    let px = &dataset.pixels[pixel];
    let x = stats.input_matrix(px, set.days.clone())?;
    let keep: Vec<usize> = set
        .days
        .clone()
        .enumerate()
        .filter(|&(_, t)| px.mask[t] && px.target[t].is_finite())
        .map(|(i, _)| i)
        .collect();
    let y = keep.iter().map(|&i| px.target[set.days.start + i]).collect();
    Ok((x.select_rows(&keep), y))
}

fn stacked_rows(dataset: &GridDataset, stats: &NormalizationStats, set: &PixelTimeSet) -> Result<(Matrix, Vec<f64>)> {
    let mut data = Vec::new();
    let mut y = Vec::new();
    for &p in &set.pixels {
        let (x, t) = observed_rows(dataset, stats, p, set)?;
        data.extend_from_slice(x.as_slice());
        y.extend(t);
    }
    let rows = y.len();
    Ok((Matrix::from_vec(rows, stats.n_inputs(), data)?, y))
}

/// Fits one pixel at a time; pixels whose fit fails are left out and logged.
fn fit_each<M: Send>(
    set: &PixelTimeSet,
    dataset: &GridDataset,
    fit: impl Fn(usize) -> Result<M> + Sync,
) -> BTreeMap<String, M> {
    let fitted: Vec<(String, Result<M>)> = set
        .pixels
        .par_iter()
        .map(|&p| (dataset.pixels[p].id.clone(), fit(p)))
        .collect();
    let mut out = BTreeMap::new();
    for (id, r) in fitted {
        match r {
            Ok(m) => {
                out.insert(id, m);
            }
            Err(e) => log::warn!("pixel {id}: {e}"),
        }
    }
    out
}

/// Fits `kind` on the training set. The per-pixel autoregression also looks
/// at the test window to choose its order.
pub fn fit_model(kind: ModelKind, dataset: &GridDataset, split: &Split, config: &ExperimentConfig) -> Result<ModelContainer> {
    let layout = config.layout(dataset);
    if kind == ModelKind::Lstm {
        let training = TrainingConfig {
            features: Some(layout),
            ..config.training.clone()
        };
        let (model, _) = train_lstm(dataset, &split.train, &training, None)?;
        return Ok(ModelContainer::lstm(model));
    }
    let stats = NormalizationStats::fit(dataset, &split.train, layout)?;
    let payload = match kind {
        ModelKind::Lstm => unreachable!(),
        ModelKind::Lasso => {
            let (x, y) = stacked_rows(dataset, &stats, &split.train)?;
            ModelPayload::Lasso(fit_lasso(&x, &y, config.lasso_lambda)?)
        }
        ModelKind::Nn => {
            let (x, y) = stacked_rows(dataset, &stats, &split.train)?;
            ModelPayload::Ffnn(fit_ffnn(&x, &y, &config.ffnn)?)
        }
        ModelKind::LassoP => ModelPayload::LassoPerPixel(fit_each(&split.train, dataset, |p| {
            let (x, y) = observed_rows(dataset, &stats, p, &split.train)?;
            fit_lasso(&x, &y, config.lasso_lambda)
        })),
        ModelKind::NnP => {
            let opts = FfnnOptions {
                hidden_size: config.ffnn_point_hidden,
                ..config.ffnn.clone()
            };
            ModelPayload::FfnnPerPixel(fit_each(&split.train, dataset, |p| {
                let (x, y) = observed_rows(dataset, &stats, p, &split.train)?;
                fit_ffnn(&x, &y, &opts)
            }))
        }
        ModelKind::ArP => {
            let pixels = fit_each(&split.train, dataset, |p| {
                let px = &dataset.pixels[p];
                let exog = stats.input_matrix(px, 0..dataset.n_days)?;
                let sweep = select_ar_order(
                    &px.target,
                    &px.mask,
                    &exog,
                    split.train.days.clone(),
                    split.test.days.clone(),
                    config.ar_eval,
                    config.ar_tolerance,
                    &px.id,
                )?;
                let obs: Vec<f64> = split
                    .train
                    .days
                    .clone()
                    .filter(|&t| px.mask[t])
                    .map(|t| px.target[t])
                    .collect();
                Ok(ArPixel {
                    model: sweep.best,
                    warmup_level: mean(&obs),
                    order_errors: sweep.errors,
                })
            });
            ModelPayload::ArPerPixel {
                pixels,
                assimilation_days: split.train.days.clone(),
            }
        }
    };
    Ok(ModelContainer::new(kind, stats, payload))
}

/// Predictions for the union of train and test pixels, keyed by pixel index.
pub fn predict_split(predictor: &dyn Predictor, dataset: &GridDataset, split: &Split) -> BTreeMap<usize, Result<Vec<f64>>> {
    let mut pixels: Vec<usize> = split.train.pixels.iter().chain(&split.test.pixels).copied().collect();
    pixels.sort_unstable();
    pixels.dedup();
    let preds: Vec<(usize, Result<Vec<f64>>)> = pixels
        .par_iter()
        .map(|&p| (p, predictor.predict_pixel(dataset, p)))
        .collect();
    preds.into_iter().collect()
}

fn phase_report(
    model: ModelKind,
    phase: Phase,
    split_desc: &str,
    dataset: &GridDataset,
    set: &PixelTimeSet,
    preds: &BTreeMap<usize, Result<Vec<f64>>>,
    anomaly: bool,
) -> MetricsReport {
    let months: Vec<u32> = set.days.clone().map(|t| dataset.date(t).month()).collect();
    let records = set
        .pixels
        .iter()
        .map(|&p| {
            let px = &dataset.pixels[p];
            let days = set.days.clone();
            let (metrics, note) = match preds.get(&p) {
                Some(Ok(pred)) => {
                    match compute_metrics(&pred[days.clone()], &px.target[days.clone()], &px.mask[days.clone()]) {
                        Ok(mut m) => {
                            if anomaly && m.r.is_some() {
                                let mask = &px.mask[days.clone()];
                                let pa = monthly_anomalies(&pred[days.clone()], mask, &months);
                                let oa = monthly_anomalies(&px.target[days.clone()], mask, &months);
                                m.r = compute_metrics(&pa, &oa, mask).ok().and_then(|a| a.r);
                            }
                            (Some(m), None)
                        }
                        Err(e) => (None, Some(e.to_string())),
                    }
                }
                Some(Err(e)) => (None, Some(e.to_string())),
                None => (None, Some("no prediction".to_string())),
            };
            PixelRecord {
                pixel_id: px.id.clone(),
                row: px.row,
                col: px.col,
                metrics,
                note,
            }
        })
        .collect();
    MetricsReport::from_records(model, phase, split_desc.to_string(), records)
}

/// Train- and test-phase reports for one predictor.
pub fn evaluate_predictor(
    predictor: &dyn Predictor,
    model: ModelKind,
    dataset: &GridDataset,
    split: &Split,
    split_desc: &str,
    anomaly: bool,
) -> (Vec<MetricsReport>, BTreeMap<usize, Result<Vec<f64>>>) {
    let preds = predict_split(predictor, dataset, split);
    let reports = vec![
        phase_report(model, Phase::Train, split_desc, dataset, &split.train, &preds, anomaly),
        phase_report(model, Phase::Test, split_desc, dataset, &split.test, &preds, anomaly),
    ];
    (reports, preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model: ModelKind,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub split: String,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<ModelFailure>,
    pub models: Vec<ModelContainer>,
    /// LSTM test-phase bias probe, when the dataset carries an lsm channel
    pub bias_probe: Option<BiasProbe>,
}

impl ExperimentOutcome {
    pub fn report(&self, model: ModelKind, phase: Phase) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model == model && r.phase == phase)
    }
}

/// Fits and evaluates every requested model. A model that fails to fit is
/// recorded in `failures` and the others carry on.
pub fn run_experiment(dataset: &GridDataset, spec: &SplitSpec, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let split = make_split(dataset, spec)?;
    let mut fitted = Vec::new();
    let mut failures = Vec::new();
    for &kind in &config.models {
        match fit_model(kind, dataset, &split, config) {
            Ok(c) => fitted.push(c),
            Err(e) => {
                log::warn!("{kind} failed: {e}");
                failures.push(ModelFailure {
                    model: kind,
                    message: e.to_string(),
                });
            }
        }
    }
    let mut outcome = evaluate_models(dataset, spec, fitted, config)?;
    outcome.failures = failures;
    Ok(outcome)
}

/// Scores already-fitted models on both phases of `spec`.
pub fn evaluate_models(
    dataset: &GridDataset,
    spec: &SplitSpec,
    models: Vec<ModelContainer>,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let split = make_split(dataset, spec)?;
    let desc = spec.describe();
    let mut outcome = ExperimentOutcome {
        split: desc.clone(),
        reports: Vec::new(),
        failures: Vec::new(),
        models: Vec::new(),
        bias_probe: None,
    };
    for container in models {
        let kind = container.kind;
        let (reports, preds) = evaluate_predictor(&container, kind, dataset, &split, &desc, config.anomaly_correlation);
        if kind == ModelKind::Lstm && dataset.has_lsm() {
            let test_preds: Vec<Option<Vec<f64>>> = split
                .test
                .pixels
                .iter()
                .map(|p| preds.get(p).and_then(|r| r.as_ref().ok()).cloned())
                .collect();
            outcome.bias_probe =
                bias_probe(dataset, &split.train, &split.test, &test_preds, config.bias_probe_threshold).ok();
        }
        outcome.reports.extend(reports);
        outcome.models.push(container);
    }
    Ok(outcome)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Writes `metrics.csv`, `comparison.csv` and `summary.json` into `dir`.
/// `echo` is copied into the summary verbatim.
pub fn write_reports(outcome: &ExperimentOutcome, dir: &Path, echo: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pixel_id", "row", "col", "model", "split_phase", "bias", "rmse", "r"])?;
    for r in &outcome.reports {
        for p in &r.pixels {
            let m = p.metrics.as_ref();
            w.write_record([
                p.pixel_id.clone(),
                p.row.to_string(),
                p.col.to_string(),
                r.model.to_string(),
                r.phase.as_str().to_string(),
                fmt_opt(m.map(|m| m.bias)),
                fmt_opt(m.map(|m| m.rmse)),
                fmt_opt(m.and_then(|m| m.r)),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(&dir.join("metrics.csv"), &bytes)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "split_phase", "metric", "p25", "p50", "p75", "p90", "n_evaluable"])?;
    for r in &outcome.reports {
        for (name, pct) in [("bias", r.summary.bias), ("rmse", r.summary.rmse), ("r", r.summary.r)] {
            w.write_record([
                r.model.to_string(),
                r.phase.as_str().to_string(),
                name.to_string(),
                fmt_opt(pct.map(|p| p.p25)),
                fmt_opt(pct.map(|p| p.p50)),
                fmt_opt(pct.map(|p| p.p75)),
                fmt_opt(pct.map(|p| p.p90)),
                r.n_evaluable.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_atomic(&dir.join("comparison.csv"), &bytes)?;

    let reports: Vec<serde_json::Value> = outcome
        .reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "model": r.model,
                "split_phase": r.phase,
                "n_pixels": r.n_pixels,
                "n_evaluable": r.n_evaluable,
                "n_excluded": r.n_excluded,
                "n_r_undefined": r.n_r_undefined,
                "percentiles": r.summary,
            })
        })
        .collect();
    let mut notes = Vec::new();
    if outcome.models.iter().any(|m| m.kind == ModelKind::ArP) {
        notes.push(AR_PROTOCOL_NOTE);
    }
    let summary = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "split": outcome.split,
        "reports": reports,
        "failures": outcome.failures,
        "bias_probe": outcome.bias_probe,
        "notes": notes,
        "config": echo,
    });
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())
}
