use serde::{Deserialize, Serialize};

use super::dropout::{sample_dropout_masks, DropoutMasks, DropoutSpec, StepMasks};
use super::weights::LstmWeights;
use crate::error::{Error, Result};
use crate::kernel::{all_finite, sigmoid, Matrix};

/// Hidden and cell state carried between steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        LstmState {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

/// Everything one step needs for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    /// input after dropout masking
    pub x: Vec<f64>,
    /// previous hidden state after recurrent masking
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// candidate input node before the memory-cell mask
    pub g: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub masks: DropoutMasks,
    pub initial: LstmState,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn apply_mask(v: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

fn gate_preactivation(gate: &super::GateParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = gate.bias.clone();
    gate.input.matvec_acc(x, &mut a);
    gate.recurrent.matvec_acc(h, &mut a);
    a
}

fn check_step_inputs(w: &LstmWeights, x: &[f64], state: &LstmState) -> Result<()> {
    if x.len() != w.input_size {
        return Err(Error::invalid(format!(
            "input length {} != input_size {}",
            x.len(),
            w.input_size
        )));
    }
    if state.hidden.len() != w.hidden_size || state.cell.len() != w.hidden_size {
        return Err(Error::invalid(format!(
            "state dimensions ({}, {}) != hidden_size {}",
            state.hidden.len(),
            state.cell.len(),
            w.hidden_size
        )));
    }
    if !all_finite(x) {
        return Err(Error::NumericInput("input vector contains non-finite values".into()));
    }
    if !all_finite(&state.hidden) || !all_finite(&state.cell) {
        return Err(Error::NumericInput("state contains non-finite values".into()));
    }
    Ok(())
}

fn check_mask_dims(w: &LstmWeights, masks: &StepMasks<'_>) -> Result<()> {
    let ok = masks.input.is_none_or(|m| m.len() == w.input_size)
        && masks.recurrent.is_none_or(|m| m.len() == w.hidden_size)
        && masks.cell.is_none_or(|m| m.len() == w.hidden_size);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("dropout mask dimensions do not match the network"))
    }
}

/// One LSTM update:
///
/// ```text
/// g = tanh(W_gx x + W_gh h + b_g)      i = σ(W_ix x + W_ih h + b_i)
/// f = σ(W_fx x + W_fh h + b_f)         o = σ(W_ox x + W_oh h + b_o)
/// s' = g ⊙ i + s ⊙ f                   h' = tanh(s') ⊙ o
/// y = W_hy h' + b_y
/// ```
///
/// Input masks multiply `x`, the recurrent mask multiplies `h` before the
/// gate products, and the memory-cell mask multiplies `g`.
pub fn lstm_step(
    w: &LstmWeights,
    x: &[f64],
    state: &LstmState,
    masks: StepMasks<'_>,
) -> Result<(LstmState, Vec<f64>, StepCache)> {
    check_step_inputs(w, x, state)?;
    check_mask_dims(w, &masks)?;
    let cache = step_unchecked(w, x, &state.hidden, &state.cell, masks);
    let next = LstmState {
        hidden: cache.h.clone(),
        cell: cache.c.clone(),
    };
    let y = cache.y.clone();
    Ok((next, y, cache))
}

fn step_unchecked(
    w: &LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    masks: StepMasks<'_>,
) -> StepCache {
    let x = apply_mask(x, masks.input);
    let h_prev = apply_mask(h_prev, masks.recurrent);

    let g: Vec<f64> = gate_preactivation(&w.cell_input, &x, &h_prev)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let i: Vec<f64> = gate_preactivation(&w.input_gate, &x, &h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let f: Vec<f64> = gate_preactivation(&w.forget_gate, &x, &h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let o: Vec<f64> = gate_preactivation(&w.output_gate, &x, &h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();

    let n = w.hidden_size;
    let mut c = vec![0.0; n];
    for j in 0..n {
        let gj = match masks.cell {
            Some(m) => g[j] * m[j],
            None => g[j],
        };
        c[j] = gj * i[j] + c_prev[j] * f[j];
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = tanh_c.iter().zip(&o).map(|(a, b)| a * b).collect();

    let mut y = w.readout_bias.clone();
    w.readout.matvec_acc(&h, &mut y);

    debug_assert!(i.iter().chain(&f).chain(&o).all(|v| (0.0..=1.0).contains(v)));
    debug_assert!(g.iter().chain(&h).all(|v| (-1.0..=1.0).contains(v)));

    StepCache {
        x,
        h_prev,
        c_prev: c_prev.to_vec(),
        g,
        i,
        f,
        o,
        c,
        tanh_c,
        h,
        y,
    }
}

fn check_sequence(w: &LstmWeights, xs: &Matrix, initial: &LstmState) -> Result<()> {
    if xs.rows() == 0 {
        return Err(Error::invalid("sequence length must be at least 1"));
    }
    if xs.cols() != w.input_size {
        return Err(Error::invalid(format!(
            "input matrix has {} columns, network expects {}",
            xs.cols(),
            w.input_size
        )));
    }
    if initial.hidden.len() != w.hidden_size || initial.cell.len() != w.hidden_size {
        return Err(Error::invalid("initial state dimensions do not match hidden_size"));
    }
    Ok(())
}

/// Unrolls the network over the rows of `xs` (ρ × input), sampling dropout
/// masks from `seed`. Returns the ρ × output predictions and the cache needed
/// by [`bptt_gradients`](super::bptt_gradients).
pub fn forward_sequence(
    w: &LstmWeights,
    xs: &Matrix,
    initial: Option<&LstmState>,
    spec: &DropoutSpec,
    seed: u64,
) -> Result<(Matrix, ForwardCache)> {
    let initial = initial
        .cloned()
        .unwrap_or_else(|| LstmState::zeros(w.hidden_size));
    check_sequence(w, xs, &initial)?;
    let steps = xs.rows();
    let masks = if spec.is_identity() {
        spec.validate()?;
        DropoutMasks::default()
    } else {
        sample_dropout_masks(spec, w.input_size, w.hidden_size, steps, seed)?
    };

    let mut ys = Matrix::zeros(steps, w.output_size);
    let mut cache = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for t in 0..steps {
        let (next, y, step) =
            lstm_step(w, xs.row(t), &state, masks.step(t)).map_err(|e| e.at_step(t))?;
        ys.row_mut(t).copy_from_slice(&y);
        cache.push(step);
        state = next;
    }
    Ok((
        ys,
        ForwardCache {
            steps: cache,
            masks,
            initial,
        },
    ))
}

/// Mask-free inference pass without a cache. Returns the predictions and the
/// final state.
pub fn run_sequence(
    w: &LstmWeights,
    xs: &Matrix,
    initial: Option<&LstmState>,
) -> Result<(Matrix, LstmState)> {
    let mut state = initial
        .cloned()
        .unwrap_or_else(|| LstmState::zeros(w.hidden_size));
    check_sequence(w, xs, &state)?;
    let mut ys = Matrix::zeros(xs.rows(), w.output_size);
    for t in 0..xs.rows() {
        let x = xs.row(t);
        if !all_finite(x) {
            return Err(Error::NumericInput("input vector contains non-finite values".into()).at_step(t));
        }
        let step = step_unchecked(w, x, &state.hidden, &state.cell, StepMasks::default());
        ys.row_mut(t).copy_from_slice(&step.y);
        state = LstmState {
            hidden: step.h,
            cell: step.c,
        };
    }
    Ok((ys, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::dropout::DropoutVariant;
    use crate::lstm::init_weights;

    fn sigma(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_network_gives_half_gates() {
        let w = LstmWeights::zeros(3, 4, 1);
        let (s, y, c) = lstm_step(&w, &[0.3, -1.0, 2.0], &LstmState::zeros(4), StepMasks::default()).unwrap();
        assert!(c.g.iter().all(|&v| v == 0.0));
        assert!(c.i.iter().chain(&c.f).chain(&c.o).all(|&v| v == 0.5));
        assert!(s.cell.iter().chain(&s.hidden).all(|&v| v == 0.0));
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn output_reduces_to_readout_bias() {
        let mut w = LstmWeights::zeros(2, 3, 1);
        w.readout_bias[0] = 0.42;
        let (_, y, _) = lstm_step(&w, &[1.0, 1.0], &LstmState::zeros(3), StepMasks::default()).unwrap();
        assert_eq!(y, vec![0.42]);
    }

    /// Straight-line scalar evaluation of one step with hidden size 2.
    #[test]
    fn matches_scalar_reference() {
        let w = init_weights(2, 2, 1, 11).unwrap();
        let x = [1.0, 0.0];
        let h0 = [0.1, -0.2];
        let c0 = [0.3, 0.05];
        let lin = |g: &crate::lstm::GateParams, j: usize| {
            g.input.get(j, 0) * x[0]
                + g.input.get(j, 1) * x[1]
                + g.recurrent.get(j, 0) * h0[0]
                + g.recurrent.get(j, 1) * h0[1]
                + g.bias[j]
        };
        let mut h = [0.0; 2];
        for j in 0..2 {
            let g = lin(&w.cell_input, j).tanh();
            let i = sigma(lin(&w.input_gate, j));
            let f = sigma(lin(&w.forget_gate, j));
            let o = sigma(lin(&w.output_gate, j));
            let s = g * i + c0[j] * f;
            h[j] = s.tanh() * o;
        }
        let expected = w.readout.get(0, 0) * h[0] + w.readout.get(0, 1) * h[1] + w.readout_bias[0];
        let state = LstmState {
            hidden: h0.to_vec(),
            cell: c0.to_vec(),
        };
        let (_, y, _) = lstm_step(&w, &x, &state, StepMasks::default()).unwrap();
        assert!((y[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let w = LstmWeights::zeros(2, 3, 1);
        let s = LstmState::zeros(3);
        assert!(matches!(
            lstm_step(&w, &[1.0], &s, StepMasks::default()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            lstm_step(&w, &[1.0, f64::NAN], &s, StepMasks::default()),
            Err(Error::NumericInput(_))
        ));
        assert!(lstm_step(&w, &[1.0, 1.0], &LstmState::zeros(2), StepMasks::default()).is_err());
    }

    #[test]
    fn single_step_sequence_equals_step() {
        let w = init_weights(3, 4, 1, 5).unwrap();
        let xs = Matrix::from_rows(&[vec![0.5, -0.1, 0.9]]).unwrap();
        let (ys, _) = forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0).unwrap();
        let (_, y, _) = lstm_step(&w, xs.row(0), &LstmState::zeros(4), StepMasks::default()).unwrap();
        assert_eq!(ys.row(0), y.as_slice());
    }

    #[test]
    fn sequence_error_carries_time_index() {
        let w = init_weights(1, 2, 1, 5).unwrap();
        let xs = Matrix::from_rows(&[vec![0.5], vec![f64::INFINITY]]).unwrap();
        match forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0) {
            Err(Error::AtStep { step, .. }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_is_deterministic_with_dropout() {
        let w = init_weights(3, 5, 1, 5).unwrap();
        let xs = Matrix::from_rows(&(0..20).map(|t| vec![t as f64 * 0.1, 1.0, -0.5]).collect::<Vec<_>>()).unwrap();
        let spec = DropoutSpec::new(DropoutVariant::NonRecurrent, 0.4).unwrap();
        let (a, _) = forward_sequence(&w, &xs, None, &spec, 3).unwrap();
        let (b, _) = forward_sequence(&w, &xs, None, &spec, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_rate_matches_mask_free_inference() {
        let w = init_weights(3, 5, 1, 5).unwrap();
        let xs = Matrix::from_rows(&(0..30).map(|t| vec![(t as f64).sin(), 1.0, -0.5]).collect::<Vec<_>>()).unwrap();
        let (free, _) = run_sequence(&w, &xs, None).unwrap();
        for variant in [
            DropoutVariant::None,
            DropoutVariant::NonRecurrent,
            DropoutVariant::RecurrentConstant,
            DropoutVariant::MemoryCell,
        ] {
            let spec = DropoutSpec { variant, rate: 0.0 };
            let (ys, _) = forward_sequence(&w, &xs, None, &spec, 17).unwrap();
            assert_eq!(ys, free);
        }
        // all-ones masks on every path are exact as well
        let ones = DropoutMasks {
            input: Some(vec![vec![1.0; 3]; 30]),
            recurrent: Some(vec![1.0; 5]),
            cell: Some(vec![vec![1.0; 5]; 30]),
        };
        let mut state = LstmState::zeros(5);
        for t in 0..30 {
            let (next, y, _) = lstm_step(&w, xs.row(t), &state, ones.step(t)).unwrap();
            assert_eq!(y.as_slice(), free.row(t));
            state = next;
        }
    }

    #[test]
    fn constant_input_converges() {
        let w = init_weights(2, 6, 1, 21).unwrap();
        let xs = Matrix::from_rows(&vec![vec![0.7, -0.3]; 200]).unwrap();
        let (_, cache) = forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0).unwrap();
        let diff = |a: usize, b: usize| {
            cache.steps[a]
                .h
                .iter()
                .zip(&cache.steps[b].h)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        assert!(diff(199, 198) < diff(1, 0));
    }
}
