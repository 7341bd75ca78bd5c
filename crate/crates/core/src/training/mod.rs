//! Masked loss, mini-batch sampling, optimizers and the LSTM training loop.

mod batch;
mod loss;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureLayout;
use crate::error::{Error, Result};
use crate::lstm::DropoutSpec;

pub use batch::{sample_batch, Batch, TrainingSet};
pub use loss::{instance_loss, masked_loss, LossNormalization};
pub use optim::{clip_gradients, Optimizer, OptimizerKind};
pub use train::{train_lstm, EpochRecord, LstmModel, TrainingHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden_size: usize,
    pub unroll_length: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// `None`: enough batches to cover the training pixel-days once
    pub batches_per_epoch: Option<usize>,
    pub learning_rate: f64,
    pub dropout: DropoutSpec,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub gradient_clip_norm: f64,
    pub loss_normalization: LossNormalization,
    pub checkpoint_every: usize,
    /// `None`: every channel the dataset provides
    pub features: Option<FeatureLayout>,
    /// Days of forcing replayed before inference to settle the state.
    pub spinup_days: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            hidden_size: 64,
            unroll_length: 365,
            batch_size: 100,
            epochs: 500,
            batches_per_epoch: None,
            learning_rate: 0.001,
            dropout: DropoutSpec::default(),
            seed: 0,
            optimizer: OptimizerKind::AdaptiveMoments,
            gradient_clip_norm: 5.0,
            loss_normalization: LossNormalization::SequenceLength,
            checkpoint_every: 50,
            features: None,
            spinup_days: 365,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.unroll_length == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("hidden size, unroll length, batch size and epochs must be positive"));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(Error::invalid("batches per epoch must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.gradient_clip_norm > 0.0) {
            return Err(Error::invalid("learning rate and clip norm must be positive"));
        }
        self.dropout.validate()
    }
}
