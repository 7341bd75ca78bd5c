//! Gridded pixel records, normalization, vertical interpolation, the
//! synthetic bucket-model generator and file I/O.

mod interp;
mod io;
mod noise;
mod normalize;
mod synth;

use std::ops::Range;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_finite, Matrix};

pub use interp::{vertical_interpolate, InterpolationMethod, LAYER_BOUNDS_CM};
pub use io::{load_dataset, save_dataset, MANIFEST_FILE};
pub use noise::{add_noise, NoiseModel};
pub use normalize::{normalize, ChannelKind, ChannelStats, FeatureLayout, NormalizationStats};
pub use synth::{
    generate_synthetic, BucketParams, BucketRanges, ClimateRanges, LsmConfig, NoiseKind, ObservationSchedule,
    RegionLayout, SyntheticConfig, ATTRIBUTE_NAMES, FORCING_NAMES,
};

/// One grid cell: dense forcings, optional land-surface-model series, static
/// attributes and the sparse target.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSeries {
    pub id: String,
    pub row: usize,
    pub col: usize,
    /// n_days × n_forcings, physical units per channel
    pub forcing: Matrix,
    pub lsm: Option<Vec<f64>>,
    pub attributes: Vec<f64>,
    /// NaN where unobserved
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
    pub region: Option<String>,
    /// Dense noise-free series, present for synthetic data only.
    pub truth: Option<Vec<f64>>,
}

impl PixelSeries {
    pub fn n_observed(&self, days: Range<usize>) -> usize {
        self.mask[days].iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub rows: usize,
    pub cols: usize,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub forcing_names: Vec<String>,
    pub attribute_names: Vec<String>,
    pub pixels: Vec<PixelSeries>,
}

impl GridDataset {
    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start_date).num_days();
        (0..self.n_days as i64).contains(&d).then_some(d as usize)
    }

    pub fn all_days(&self) -> Range<usize> {
        0..self.n_days
    }

    pub fn pixel_at(&self, row: usize, col: usize) -> Option<usize> {
        self.pixels.iter().position(|p| p.row == row && p.col == col)
    }

    pub fn has_lsm(&self) -> bool {
        !self.pixels.is_empty() && self.pixels.iter().all(|p| p.lsm.is_some())
    }

    pub fn regions(&self) -> Vec<String> {
        let mut r: Vec<String> = self.pixels.iter().filter_map(|p| p.region.clone()).collect();
        r.sort();
        r.dedup();
        r
    }

    /// Checks the structural invariants: series lengths, unique in-bounds
    /// coordinates, finite attributes, observed targets in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.pixels {
            if p.row >= self.rows || p.col >= self.cols {
                return Err(Error::Structural(format!(
                    "pixel {} at ({}, {}) outside {}x{} grid",
                    p.id, p.row, p.col, self.rows, self.cols
                )));
            }
            if !seen.insert((p.row, p.col)) {
                return Err(Error::Structural(format!(
                    "duplicate pixel coordinate ({}, {})",
                    p.row, p.col
                )));
            }
            let n = self.n_days;
            let lengths_ok = p.forcing.rows() == n
                && p.forcing.cols() == self.forcing_names.len()
                && p.target.len() == n
                && p.mask.len() == n
                && p.lsm.as_ref().is_none_or(|v| v.len() == n)
                && p.truth.as_ref().is_none_or(|v| v.len() == n);
            if !lengths_ok {
                return Err(Error::Structural(format!(
                    "pixel {}: series lengths do not match the {n}-day date range",
                    p.id
                )));
            }
            if p.attributes.len() != self.attribute_names.len() {
                return Err(Error::Structural(format!(
                    "pixel {}: {} attributes, manifest names {}",
                    p.id,
                    p.attributes.len(),
                    self.attribute_names.len()
                )));
            }
            if !all_finite(&p.attributes) {
                return Err(Error::Structural(format!("pixel {}: non-finite attribute", p.id)));
            }
            for (t, (&v, &m)) in p.target.iter().zip(&p.mask).enumerate() {
                if m && !(0.0..=1.0).contains(&v) {
                    return Err(Error::Structural(format!(
                        "pixel {}: observed target {v} on day {t} outside [0, 1]",
                        p.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A set of pixels restricted to a contiguous day window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelTimeSet {
    pub pixels: Vec<usize>,
    pub days: Range<usize>,
}

impl PixelTimeSet {
    pub fn new(pixels: Vec<usize>, days: Range<usize>) -> Self {
        PixelTimeSet { pixels, days }
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty() || self.days.is_empty()
    }

    pub fn contains(&self, pixel: usize, day: usize) -> bool {
        self.days.contains(&day) && self.pixels.contains(&pixel)
    }
}
