use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{sample_batch, TrainingSet};
use super::loss::instance_loss;
use super::optim::{clip_gradients, Optimizer};
use super::TrainingConfig;
use crate::container::ModelContainer;
use crate::dataset::{FeatureLayout, GridDataset, NormalizationStats, PixelSeries, PixelTimeSet};
use crate::error::{Error, Result};
use crate::kernel::{derive_seed, mean, seeded_rng, Matrix};
use crate::lstm::{bptt_gradients, forward_sequence, init_weights, run_sequence, LstmWeights};

/// A trained network together with what inference needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub weights: LstmWeights,
    pub normalization: NormalizationStats,
    pub spinup_days: usize,
}

impl LstmModel {
    /// Dropout-free prediction for every day of the record. The state is
    /// first settled by running the opening `spinup_days` of forcing from a
    /// zero state.
    pub fn predict_pixel(&self, pixel: &PixelSeries, n_days: usize) -> Result<Vec<f64>> {
        let xs = self.normalization.input_matrix(pixel, 0..n_days)?;
        let spin = self.spinup_days.min(n_days);
        let initial = if spin > 0 {
            Some(run_sequence(&self.weights, &xs.slice_rows(0, spin), None)?.1)
        } else {
            None
        };
        let (ys, _) = run_sequence(&self.weights, &xs, initial.as_ref())?;
        Ok(ys.column(0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

fn resolve_layout(dataset: &GridDataset, config: &TrainingConfig) -> FeatureLayout {
    config.features.unwrap_or(FeatureLayout {
        forcings: true,
        attributes: !dataset.attribute_names.is_empty(),
        lsm: dataset.has_lsm(),
    })
}

/// Trains a single-layer LSTM on the observed targets of `train`. With a
/// `checkpoint_dir`, a model container is written there every
/// `checkpoint_every` epochs.
pub fn train_lstm(
    dataset: &GridDataset,
    train: &PixelTimeSet,
    config: &TrainingConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(LstmModel, TrainingHistory)> {
    config.validate()?;
    let normalization = NormalizationStats::fit(dataset, train, resolve_layout(dataset, config))?;
    if normalization.n_inputs() == 0 {
        return Err(Error::invalid("no non-constant input channel to train on"));
    }
    let set = TrainingSet::build(dataset, train, &normalization)?;
    if config.unroll_length > set.n_days() {
        return Err(Error::invalid(format!(
            "unroll length {} exceeds the {} training days",
            config.unroll_length,
            set.n_days()
        )));
    }
    let mut weights = init_weights(normalization.n_inputs(), config.hidden_size, 1, derive_seed(config.seed, 0))?;
    let observed: Vec<f64> = set
        .targets
        .iter()
        .zip(&set.masks)
        .flat_map(|(t, m)| t.iter().zip(m).filter(|(_, &m)| m != 0.0).map(|(&v, _)| v))
        .collect();
    if observed.is_empty() {
        return Err(Error::DegenerateBatch);
    }
    weights.readout_bias[0] = mean(&observed);

    let batches_per_epoch = config.batches_per_epoch.unwrap_or_else(|| {
        let cells = set.len() * set.n_days();
        cells.div_ceil(config.batch_size * config.unroll_length).max(1)
    });
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &weights);
    let mut rng = seeded_rng(derive_seed(config.seed, 1));
    let dropout_root = derive_seed(config.seed, 2);
    let mut history = TrainingHistory::default();
    let clock = Instant::now();
    let mut update = 0u64;

    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        for b in 0..batches_per_epoch {
            let batch = sample_batch(&set, config.batch_size, config.unroll_length, &mut rng)?;
            let n = batch.inputs.len();
            let batch_seed = derive_seed(dropout_root, update);
            update += 1;
            let w = &weights;
            let results: Vec<Result<(f64, LstmWeights)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let (ys, cache) =
                        forward_sequence(w, &batch.inputs[i], None, &config.dropout, derive_seed(batch_seed, i as u64))?;
                    let (loss, mut grad) = instance_loss(
                        ys.as_slice(),
                        batch.targets.row(i),
                        batch.mask.row(i),
                        config.loss_normalization,
                    );
                    grad.iter_mut().for_each(|g| *g /= n as f64);
                    let dl_dy = Matrix::from_vec(grad.len(), 1, grad)?;
                    Ok((loss, bptt_gradients(w, &cache, &dl_dy)?))
                })
                .collect();
            // fixed instance order
            let mut grads = weights.zeros_like();
            let mut loss = 0.0;
            for r in results {
                let (l, g) = r?;
                loss += l;
                grads.add_assign(&g);
            }
            loss /= n as f64;
            if !loss.is_finite() || !grads.l2_norm().is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    pixels: batch.pixel_ids.clone(),
                });
            }
            clip_gradients(&mut grads, config.gradient_clip_norm);
            optimizer.step(&mut weights, &grads);
            epoch_loss += loss;
        }
        let loss = epoch_loss / batches_per_epoch as f64;
        history.records.push(EpochRecord {
            epoch,
            loss,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: loss {loss:.6}");
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                let model = LstmModel {
                    weights: weights.clone(),
                    normalization: normalization.clone(),
                    spinup_days: config.spinup_days,
                };
                ModelContainer::lstm(model).save(&dir.join(format!("checkpoint_{epoch:05}.json")))?;
            }
        }
    }
    Ok((
        LstmModel {
            weights,
            normalization,
            spinup_days: config.spinup_days,
        },
        history,
    ))
}
