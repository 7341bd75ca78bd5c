//! Single-layer LSTM: forward unrolling, dropout masks and backpropagation
//! through time.

mod bptt;
mod cell;
mod dropout;
mod weights;

pub use bptt::bptt_gradients;
pub use cell::{forward_sequence, lstm_step, run_sequence, ForwardCache, LstmState, StepCache};
pub use dropout::{sample_dropout_masks, DropoutMasks, DropoutSpec, DropoutVariant, StepMasks};
pub use weights::{init_weights, GateParams, LstmWeights};
