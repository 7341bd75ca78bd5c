//! Versioned JSON container for every fitted model kind.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{ar_filter, ffnn_predict, ArModel, FfnnModel, LassoModel};
use crate::dataset::{GridDataset, NormalizationStats};
use crate::error::{Error, Result};
use crate::lstm::LstmWeights;
use crate::training::LstmModel;

pub const FORMAT_TAG: &str = "hlstm-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lstm,
    Lasso,
    LassoP,
    ArP,
    Nn,
    NnP,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lstm,
        ModelKind::Lasso,
        ModelKind::LassoP,
        ModelKind::ArP,
        ModelKind::Nn,
        ModelKind::NnP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Lasso => "lasso",
            ModelKind::LassoP => "lasso_p",
            ModelKind::ArP => "ar_p",
            ModelKind::Nn => "nn",
            ModelKind::NnP => "nn_p",
        }
    }

    /// One model per pixel rather than one for the whole grid.
    pub fn is_point_mode(self) -> bool {
        matches!(self, ModelKind::LassoP | ModelKind::ArP | ModelKind::NnP)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model kind {s:?}")))
    }
}

/// Per-pixel autoregression plus what its recursion needs at inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArPixel {
    pub model: ArModel,
    /// value fed as every lag before the first day
    pub warmup_level: f64,
    /// held-out RMSE per candidate order
    pub order_errors: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "model", rename_all = "snake_case")]
pub enum ModelPayload {
    Lstm {
        weights: LstmWeights,
        spinup_days: usize,
    },
    Lasso(LassoModel),
    Ffnn(FfnnModel),
    LassoPerPixel(BTreeMap<String, LassoModel>),
    FfnnPerPixel(BTreeMap<String, FfnnModel>),
    ArPerPixel {
        pixels: BTreeMap<String, ArPixel>,
        /// days whose observations update the lags
        assimilation_days: Range<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelContainer {
    pub format: String,
    pub kind: ModelKind,
    pub normalization: NormalizationStats,
    pub payload: ModelPayload,
}

impl ModelContainer {
    pub fn new(kind: ModelKind, normalization: NormalizationStats, payload: ModelPayload) -> Self {
        ModelContainer {
            format: FORMAT_TAG.to_string(),
            kind,
            normalization,
            payload,
        }
    }

    pub fn lstm(model: LstmModel) -> Self {
        ModelContainer::new(
            ModelKind::Lstm,
            model.normalization,
            ModelPayload::Lstm {
                weights: model.weights,
                spinup_days: model.spinup_days,
            },
        )
    }

    pub fn as_lstm(&self) -> Option<LstmModel> {
        match &self.payload {
            ModelPayload::Lstm { weights, spinup_days } => Some(LstmModel {
                weights: weights.clone(),
                normalization: self.normalization.clone(),
                spinup_days: *spinup_days,
            }),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT_TAG) => {}
            Some(other) => return Err(Error::Container(format!("format tag {other:?}, expected {FORMAT_TAG:?}"))),
            None => return Err(Error::Container("missing format tag".into())),
        }
        let c: ModelContainer = serde_json::from_value(value)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let n = self.normalization.n_inputs();
        let ok = match &self.payload {
            ModelPayload::Lstm { weights, .. } => {
                weights.validate()?;
                weights.input_size == n && weights.output_size == 1
            }
            ModelPayload::Lasso(m) => m.coefficients.len() == n,
            ModelPayload::Ffnn(m) => m.input_size() == n,
            ModelPayload::LassoPerPixel(ms) => ms.values().all(|m| m.coefficients.len() == n),
            ModelPayload::FfnnPerPixel(ms) => ms.values().all(|m| m.input_size() == n),
            ModelPayload::ArPerPixel { pixels, .. } => pixels.values().all(|p| p.model.exog_coefs.len() == n),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Container("model dimensions disagree with the normalization channels".into()))
        }
    }

    /// Predictions for every day of the record of pixel `index`.
    pub fn predict_pixel(&self, dataset: &GridDataset, index: usize) -> Result<Vec<f64>> {
        let pixel = &dataset.pixels[index];
        let n = dataset.n_days;
        let missing = || Error::invalid(format!("{} model has no fit for pixel {}", self.kind, pixel.id));
        match &self.payload {
            ModelPayload::Lstm { .. } => self.as_lstm().unwrap().predict_pixel(pixel, n),
            ModelPayload::Lasso(m) => m.predict(&self.normalization.input_matrix(pixel, 0..n)?),
            ModelPayload::Ffnn(m) => ffnn_predict(m, &self.normalization.input_matrix(pixel, 0..n)?),
            ModelPayload::LassoPerPixel(ms) => {
                let m = ms.get(&pixel.id).ok_or_else(missing)?;
                m.predict(&self.normalization.input_matrix(pixel, 0..n)?)
            }
            ModelPayload::FfnnPerPixel(ms) => {
                let m = ms.get(&pixel.id).ok_or_else(missing)?;
                ffnn_predict(m, &self.normalization.input_matrix(pixel, 0..n)?)
            }
            ModelPayload::ArPerPixel {
                pixels,
                assimilation_days,
            } => {
                let p = pixels.get(&pixel.id).ok_or_else(missing)?;
                let exog = self.normalization.input_matrix(pixel, 0..n)?;
                let observed: Vec<Option<f64>> = (0..n)
                    .map(|t| {
                        (assimilation_days.contains(&t) && pixel.mask[t] && pixel.target[t].is_finite())
                            .then(|| pixel.target[t])
                    })
                    .collect();
                ar_filter(&p.model, &exog, &observed, &vec![p.warmup_level; p.model.order])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ChannelKind, ChannelStats, FeatureLayout};

    fn stats(n: usize) -> NormalizationStats {
        NormalizationStats {
            layout: FeatureLayout::FORCINGS_ONLY,
            channels: (0..n)
                .map(|k| ChannelStats {
                    name: format!("f{k}"),
                    channel: ChannelKind::Forcing(k),
                    mean: 0.5,
                    std: 2.0,
                })
                .collect(),
            excluded: vec![],
        }
    }

    #[test]
    fn round_trip_preserves_lstm() {
        let weights = crate::lstm::init_weights(2, 3, 1, 9).unwrap();
        let c = ModelContainer::new(
            ModelKind::Lstm,
            stats(2),
            ModelPayload::Lstm {
                weights,
                spinup_days: 10,
            },
        );
        let back = ModelContainer::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn wrong_tag_rejected() {
        let c = ModelContainer::new(
            ModelKind::Lasso,
            stats(1),
            ModelPayload::Lasso(LassoModel {
                intercept: 0.1,
                coefficients: vec![0.2],
                lambda: 0.0,
                converged: true,
                sweeps: 1,
            }),
        );
        let text = c.to_json().unwrap().replace(FORMAT_TAG, "hlstm-v0");
        assert!(matches!(ModelContainer::from_json(&text), Err(Error::Container(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = ModelContainer::new(
            ModelKind::Lasso,
            stats(2),
            ModelPayload::Lasso(LassoModel {
                intercept: 0.1,
                coefficients: vec![0.2],
                lambda: 0.0,
                converged: true,
                sweeps: 1,
            }),
        );
        assert!(ModelContainer::from_json(&c.to_json().unwrap()).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("arx".parse::<ModelKind>().is_err());
    }
}
