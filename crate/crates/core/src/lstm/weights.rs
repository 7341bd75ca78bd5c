use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_finite, seeded_rng, Matrix};

/// Parameters feeding one gate (or the candidate input node): input weights,
/// recurrent weights and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// hidden × input
    pub input: Matrix,
    /// hidden × hidden
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GateParams {
            input: Matrix::zeros(hidden_size, input_size),
            recurrent: Matrix::zeros(hidden_size, hidden_size),
            bias: vec![0.0; hidden_size],
        }
    }
}

/// All trainable parameters of a single-layer LSTM with a linear readout.
///
/// The same layout doubles as the gradient container returned by
/// [`bptt_gradients`](super::bptt_gradients).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
    /// candidate input node (tanh)
    pub cell_input: GateParams,
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    /// output × hidden
    pub readout: Matrix,
    pub readout_bias: Vec<f64>,
}

/// Samples every weight uniformly in `±1/√hidden_size`, with the forget-gate
/// bias set to 1.0.
pub fn init_weights(
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    seed: u64,
) -> Result<LstmWeights> {
    if input_size == 0 || hidden_size == 0 || output_size == 0 {
        return Err(Error::invalid(format!(
            "LSTM sizes must be positive (input {input_size}, hidden {hidden_size}, output {output_size})"
        )));
    }
    let bound = 1.0 / (hidden_size as f64).sqrt();
    let mut rng = seeded_rng(seed);
    let gate = |rng: &mut _| GateParams {
        input: Matrix::random_uniform(hidden_size, input_size, bound, rng),
        recurrent: Matrix::random_uniform(hidden_size, hidden_size, bound, rng),
        bias: Matrix::random_uniform(hidden_size, 1, bound, rng).into_vec(),
    };
    let cell_input = gate(&mut rng);
    let input_gate = gate(&mut rng);
    let mut forget_gate = gate(&mut rng);
    forget_gate.bias.iter_mut().for_each(|b| *b = 1.0);
    let output_gate = gate(&mut rng);
    let readout = Matrix::random_uniform(output_size, hidden_size, bound, &mut rng);
    let readout_bias = Matrix::random_uniform(output_size, 1, bound, &mut rng).into_vec();
    Ok(LstmWeights {
        input_size,
        hidden_size,
        output_size,
        cell_input,
        input_gate,
        forget_gate,
        output_gate,
        readout,
        readout_bias,
    })
}

impl LstmWeights {
    pub fn zeros(input_size: usize, hidden_size: usize, output_size: usize) -> Self {
        LstmWeights {
            input_size,
            hidden_size,
            output_size,
            cell_input: GateParams::zeros(input_size, hidden_size),
            input_gate: GateParams::zeros(input_size, hidden_size),
            forget_gate: GateParams::zeros(input_size, hidden_size),
            output_gate: GateParams::zeros(input_size, hidden_size),
            readout: Matrix::zeros(output_size, hidden_size),
            readout_bias: vec![0.0; output_size],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.output_size)
    }

    pub fn gates(&self) -> [&GateParams; 4] {
        [&self.cell_input, &self.input_gate, &self.forget_gate, &self.output_gate]
    }

    /// Parameter arrays in a fixed order: the four gates (input, recurrent,
    /// bias each), then readout weights and readout bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(14);
        for g in self.gates() {
            out.push(g.input.as_slice());
            out.push(g.recurrent.as_slice());
            out.push(g.bias.as_slice());
        }
        out.push(self.readout.as_slice());
        out.push(self.readout_bias.as_slice());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        for g in [
            &mut self.cell_input,
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
        ] {
            out.push(g.input.as_mut_slice());
            out.push(g.recurrent.as_mut_slice());
            out.push(g.bias.as_mut_slice());
        }
        out.push(self.readout.as_mut_slice());
        out.push(self.readout_bias.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn l2_norm(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &LstmWeights) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn same_shape(&self, other: &LstmWeights) -> bool {
        self.input_size == other.input_size
            && self.hidden_size == other.hidden_size
            && self.output_size == other.output_size
    }

    /// Checks every array against the size fields and that all entries are
    /// finite.
    pub fn validate(&self) -> Result<()> {
        let (n_in, n_h, n_out) = (self.input_size, self.hidden_size, self.output_size);
        if n_in == 0 || n_h == 0 || n_out == 0 {
            return Err(Error::invalid("LSTM sizes must be positive"));
        }
        for (name, g) in ["cell_input", "input_gate", "forget_gate", "output_gate"]
            .iter()
            .zip(self.gates())
        {
            if g.input.shape() != (n_h, n_in)
                || g.recurrent.shape() != (n_h, n_h)
                || g.bias.len() != n_h
            {
                return Err(Error::invalid(format!("{name} arrays inconsistent with sizes")));
            }
        }
        if self.readout.shape() != (n_out, n_h) || self.readout_bias.len() != n_out {
            return Err(Error::invalid("readout arrays inconsistent with sizes"));
        }
        if !self.param_slices().iter().all(|s| all_finite(s)) {
            return Err(Error::NumericInput("LSTM weights contain non-finite entries".into()));
        }
        Ok(())
    }
}
