use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{GridDataset, PixelSeries, PixelTimeSet};
use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Which input channels a model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub forcings: bool,
    pub attributes: bool,
    pub lsm: bool,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout {
            forcings: true,
            attributes: true,
            lsm: true,
        }
    }
}

impl FeatureLayout {
    pub const FORCINGS_ONLY: FeatureLayout = FeatureLayout {
        forcings: true,
        attributes: false,
        lsm: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ChannelKind {
    Forcing(usize),
    Attribute(usize),
    Lsm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub name: String,
    pub channel: ChannelKind,
    pub mean: f64,
    pub std: f64,
}

/// z-score statistics for every input channel, computed on a training
/// subset. Channels with zero variance are dropped from the model inputs and
/// listed in `excluded`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub layout: FeatureLayout,
    pub channels: Vec<ChannelStats>,
    pub excluded: Vec<String>,
}

fn moments(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    // Welford
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let var = if n > 0 { m2 / n as f64 } else { 0.0 };
    (mean, var.sqrt(), n)
}

impl NormalizationStats {
    pub fn fit(dataset: &GridDataset, train: &PixelTimeSet, layout: FeatureLayout) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("normalization needs a non-empty training set"));
        }
        if train.days.end > dataset.n_days || train.pixels.iter().any(|&p| p >= dataset.pixels.len()) {
            return Err(Error::invalid("training set outside the dataset"));
        }
        let pixels: Vec<&PixelSeries> = train.pixels.iter().map(|&i| &dataset.pixels[i]).collect();
        let days = train.days.clone();
        let mut channels = Vec::new();
        let mut excluded = Vec::new();
        let mut push = |name: &str, channel: ChannelKind, (mean, std, _n): (f64, f64, usize)| {
            if std > 1e-12 * mean.abs().max(1.0) {
                channels.push(ChannelStats {
                    name: name.to_string(),
                    channel,
                    mean,
                    std,
                });
            } else {
                excluded.push(name.to_string());
            }
        };
        if layout.forcings {
            for (k, name) in dataset.forcing_names.iter().enumerate() {
                let it = pixels
                    .iter()
                    .flat_map(|p| days.clone().map(move |t| p.forcing.get(t, k)));
                push(name, ChannelKind::Forcing(k), moments(it));
            }
        }
        if layout.attributes {
            for (k, name) in dataset.attribute_names.iter().enumerate() {
                push(name, ChannelKind::Attribute(k), moments(pixels.iter().map(|p| p.attributes[k])));
            }
        }
        if layout.lsm {
            if !dataset.has_lsm() {
                return Err(Error::invalid("layout requests the lsm channel but the dataset has none"));
            }
            let it = pixels
                .iter()
                .flat_map(|p| p.lsm.as_ref().unwrap()[days.clone()].iter().copied());
            push("lsm", ChannelKind::Lsm, moments(it));
        }
        Ok(NormalizationStats {
            layout,
            channels,
            excluded,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.channels.len()
    }

    /// Normalized model inputs for `pixel` over `days` (days × n_inputs).
    pub fn input_matrix(&self, pixel: &PixelSeries, days: Range<usize>) -> Result<Matrix> {
        let n = self.channels.len();
        let mut m = Matrix::zeros(days.len(), n);
        for (r, t) in days.enumerate() {
            let row = m.row_mut(r);
            for (slot, c) in row.iter_mut().zip(&self.channels) {
                let raw = match c.channel {
                    ChannelKind::Forcing(k) => pixel.forcing.get(t, k),
                    ChannelKind::Attribute(k) => pixel.attributes[k],
                    ChannelKind::Lsm => match &pixel.lsm {
                        Some(l) => l[t],
                        None => {
                            return Err(Error::invalid(format!("pixel {} has no lsm series", pixel.id)));
                        }
                    },
                };
                *slot = (raw - c.mean) / c.std;
            }
        }
        Ok(m)
    }
}

/// Returns a copy of `dataset` with every forcing, attribute and lsm channel
/// z-scored with statistics from `train` only. Targets are untouched, as are
/// excluded (constant) channels.
pub fn normalize(dataset: &GridDataset, train: &PixelTimeSet) -> Result<(GridDataset, NormalizationStats)> {
    let layout = FeatureLayout {
        lsm: dataset.has_lsm(),
        ..FeatureLayout::default()
    };
    let stats = NormalizationStats::fit(dataset, train, layout)?;
    let mut out = dataset.clone();
    for p in &mut out.pixels {
        for c in &stats.channels {
            match c.channel {
                ChannelKind::Forcing(k) => {
                    for t in 0..p.forcing.rows() {
                        let v = p.forcing.get(t, k);
                        p.forcing.set(t, k, (v - c.mean) / c.std);
                    }
                }
                ChannelKind::Attribute(k) => p.attributes[k] = (p.attributes[k] - c.mean) / c.std,
                ChannelKind::Lsm => {
                    if let Some(l) = p.lsm.as_mut() {
                        l.iter_mut().for_each(|v| *v = (*v - c.mean) / c.std);
                    }
                }
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dataset(values: impl Fn(usize, usize) -> f64) -> GridDataset {
        let n = 50;
        let pixels = (0..4)
            .map(|k| PixelSeries {
                id: format!("p{k}"),
                row: k / 2,
                col: k % 2,
                forcing: Matrix::from_vec(n, 2, (0..n).flat_map(|t| [values(k, t), 3.0]).collect()).unwrap(),
                lsm: None,
                attributes: vec![k as f64],
                target: vec![0.2; n],
                mask: vec![true; n],
                region: None,
                truth: None,
            })
            .collect();
        GridDataset {
            rows: 2,
            cols: 2,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            n_days: n,
            forcing_names: vec!["x".into(), "const".into()],
            attribute_names: vec!["a".into()],
            pixels,
        }
    }

    #[test]
    fn constant_feature_is_excluded() {
        let ds = dataset(|k, t| (k * 7 + t) as f64);
        let train = PixelTimeSet::new(vec![0, 1, 2, 3], 0..50);
        let (_, stats) = normalize(&ds, &train).unwrap();
        assert_eq!(stats.excluded, vec!["const".to_string()]);
        assert_eq!(stats.n_inputs(), 2);
    }

    #[test]
    fn standardized_feature_is_unchanged() {
        // alternating ±1 has mean 0 and population std 1
        let ds = dataset(|_, t| if t % 2 == 0 { 1.0 } else { -1.0 });
        let train = PixelTimeSet::new(vec![0, 1, 2, 3], 0..50);
        let (out, stats) = normalize(&ds, &train).unwrap();
        let c = &stats.channels[0];
        assert!(c.mean.abs() < 1e-12 && (c.std - 1.0).abs() < 1e-12);
        for (p, q) in ds.pixels.iter().zip(&out.pixels) {
            for t in 0..50 {
                assert!((p.forcing.get(t, 0) - q.forcing.get(t, 0)).abs() < 1e-12);
            }
            assert_eq!(p.target, q.target);
        }
    }

    #[test]
    fn statistics_come_from_training_subset_only() {
        // feature shifted upward in pixels 2 and 3
        let ds = dataset(|k, t| (t % 5) as f64 + if k >= 2 { 10.0 } else { 0.0 });
        let train = PixelTimeSet::new(vec![0, 1], 0..50);
        let (out, _) = normalize(&ds, &train).unwrap();
        let test_mean: f64 = [2, 3]
            .iter()
            .flat_map(|&k| (0..50).map(move |t| (k, t)))
            .map(|(k, t)| out.pixels[k].forcing.get(t, 0))
            .sum::<f64>()
            / 100.0;
        let train_mean: f64 = (0..2)
            .flat_map(|k| (0..50).map(move |t| (k, t)))
            .map(|(k, t)| out.pixels[k].forcing.get(t, 0))
            .sum::<f64>()
            / 100.0;
        assert!(train_mean.abs() < 1e-12);
        assert!(test_mean > 5.0, "test mean {test_mean}");
    }

    #[test]
    fn empty_training_set_rejected() {
        let ds = dataset(|_, t| t as f64);
        assert!(normalize(&ds, &PixelTimeSet::new(vec![], 0..50)).is_err());
    }
}
