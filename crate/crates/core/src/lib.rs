//! Gap-aware sequence learning for sparsely observed gridded time series.
pub mod baselines;
pub mod container;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod io_util;
pub mod kernel;
pub mod lstm;
pub mod training;

pub use container::{ModelContainer, ModelKind, ModelPayload};
pub use error::{Error, Result};
