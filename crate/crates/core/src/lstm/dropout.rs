use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutVariant {
    None,
    /// Fresh mask on the input-to-gate paths at every step.
    NonRecurrent,
    /// One mask on the hidden-to-gate paths, shared by every step of a sequence.
    RecurrentConstant,
    /// Fresh mask on the candidate input node at every step.
    MemoryCell,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub variant: DropoutVariant,
    pub rate: f64,
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec {
        variant: DropoutVariant::None,
        rate: 0.0,
    };

    pub fn new(variant: DropoutVariant, rate: f64) -> Result<Self> {
        let spec = DropoutSpec { variant, rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::invalid(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// True when no mask would ever change a value.
    pub fn is_identity(&self) -> bool {
        self.variant == DropoutVariant::None || self.rate == 0.0
    }
}

impl Default for DropoutSpec {
    fn default() -> Self {
        DropoutSpec {
            variant: DropoutVariant::RecurrentConstant,
            rate: 0.5,
        }
    }
}

/// Masks for one sequence. `None` means the path is untouched. Entries are
/// either 0 or `1/(1-rate)` (inverted scaling).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DropoutMasks {
    /// per step, length `input_size`
    pub input: Option<Vec<Vec<f64>>>,
    /// length `hidden_size`, reused at every step
    pub recurrent: Option<Vec<f64>>,
    /// per step, length `hidden_size`
    pub cell: Option<Vec<Vec<f64>>>,
}

/// Masks that apply at one step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepMasks<'a> {
    pub input: Option<&'a [f64]>,
    pub recurrent: Option<&'a [f64]>,
    pub cell: Option<&'a [f64]>,
}

impl DropoutMasks {
    pub fn step(&self, t: usize) -> StepMasks<'_> {
        StepMasks {
            input: self.input.as_ref().map(|m| m[t].as_slice()),
            recurrent: self.recurrent.as_deref(),
            cell: self.cell.as_ref().map(|m| m[t].as_slice()),
        }
    }
}

fn bernoulli_mask(rng: &mut impl Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Samples the masks for a sequence of `steps` steps. `variant=None` yields
/// all-ones masks on the input path so callers can check the identity case
/// explicitly; the forward pass itself skips masking entirely for an identity
/// spec.
pub fn sample_dropout_masks(
    spec: &DropoutSpec,
    input_size: usize,
    hidden_size: usize,
    steps: usize,
    seed: u64,
) -> Result<DropoutMasks> {
    spec.validate()?;
    if steps == 0 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    let mut rng = seeded_rng(seed);
    let masks = match spec.variant {
        DropoutVariant::None => DropoutMasks {
            input: Some(vec![vec![1.0; input_size]; steps]),
            ..Default::default()
        },
        DropoutVariant::NonRecurrent => DropoutMasks {
            input: Some(
                (0..steps)
                    .map(|_| bernoulli_mask(&mut rng, input_size, spec.rate))
                    .collect(),
            ),
            ..Default::default()
        },
        DropoutVariant::RecurrentConstant => DropoutMasks {
            recurrent: Some(bernoulli_mask(&mut rng, hidden_size, spec.rate)),
            ..Default::default()
        },
        DropoutVariant::MemoryCell => DropoutMasks {
            cell: Some(
                (0..steps)
                    .map(|_| bernoulli_mask(&mut rng, hidden_size, spec.rate))
                    .collect(),
            ),
            ..Default::default()
        },
    };
    Ok(masks)
}
