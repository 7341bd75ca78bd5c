use rand::Rng;

use crate::dataset::{GridDataset, NormalizationStats, PixelTimeSet};
use crate::error::{Error, Result};
use crate::kernel::{Matrix, SeededRng};

/// Normalized inputs and targets of the training pixels, restricted to the
/// training days.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
    pub masks: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn build(dataset: &GridDataset, train: &PixelTimeSet, stats: &NormalizationStats) -> Result<Self> {
        let mut set = TrainingSet {
            ids: Vec::new(),
            inputs: Vec::new(),
            targets: Vec::new(),
            masks: Vec::new(),
        };
        for &p in &train.pixels {
            let px = &dataset.pixels[p];
            set.ids.push(px.id.clone());
            set.inputs.push(stats.input_matrix(px, train.days.clone())?);
            set.targets.push(px.target[train.days.clone()].to_vec());
            set.masks.push(
                px.mask[train.days.clone()]
                    .iter()
                    .map(|&m| if m { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_days(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }
}

/// One mini-batch of unrolled windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// one ρ × features matrix per instance
    pub inputs: Vec<Matrix>,
    /// batch × ρ, NaN where unobserved
    pub targets: Matrix,
    /// batch × ρ of {0, 1}
    pub mask: Matrix,
    pub pixel_ids: Vec<String>,
    pub starts: Vec<usize>,
}

const RESAMPLE_LIMIT: usize = 100;

/// Draws `batch_size` pixels uniformly with replacement, each with a window
/// of `unroll_length` days starting at a uniform offset. A batch without a
/// single observation is redrawn.
pub fn sample_batch(set: &TrainingSet, batch_size: usize, unroll_length: usize, rng: &mut SeededRng) -> Result<Batch> {
    if set.is_empty() {
        return Err(Error::invalid("no training pixels"));
    }
    let n_days = set.n_days();
    if unroll_length == 0 || unroll_length > n_days {
        return Err(Error::invalid(format!(
            "unroll length {unroll_length} must lie in 1..={n_days} (training days)"
        )));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    for _ in 0..RESAMPLE_LIMIT {
        let mut batch = Batch {
            inputs: Vec::with_capacity(batch_size),
            targets: Matrix::zeros(batch_size, unroll_length),
            mask: Matrix::zeros(batch_size, unroll_length),
            pixel_ids: Vec::with_capacity(batch_size),
            starts: Vec::with_capacity(batch_size),
        };
        for b in 0..batch_size {
            let p = rng.random_range(0..set.len());
            let start = rng.random_range(0..=n_days - unroll_length);
            let end = start + unroll_length;
            batch.inputs.push(set.inputs[p].slice_rows(start, end));
            batch.targets.row_mut(b).copy_from_slice(&set.targets[p][start..end]);
            batch.mask.row_mut(b).copy_from_slice(&set.masks[p][start..end]);
            batch.pixel_ids.push(set.ids[p].clone());
            batch.starts.push(start);
        }
        if batch.mask.as_slice().iter().any(|&m| m != 0.0) {
            return Ok(batch);
        }
    }
    Err(Error::DegenerateBatch)
}
