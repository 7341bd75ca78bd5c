//! BPTT gradients against central finite differences.

use hlstm_core::kernel::{derive_seed, gaussian, seeded_rng, Matrix};
use hlstm_core::lstm::{bptt_gradients, forward_sequence, init_weights, DropoutSpec, DropoutVariant, LstmWeights};

const STEP: f64 = 1e-5;

fn quadratic_loss(w: &LstmWeights, xs: &Matrix, targets: &Matrix, spec: &DropoutSpec, seed: u64) -> f64 {
    let (ys, _) = forward_sequence(w, xs, None, spec, seed).unwrap();
    ys.as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(y, t)| 0.5 * (y - t).powi(2))
        .sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error over every parameter of the network.
fn max_gradient_error(input: usize, hidden: usize, steps: usize, spec: DropoutSpec, seed: u64) -> f64 {
    let mut rng = seeded_rng(derive_seed(seed, 1));
    let w = init_weights(input, hidden, 1, seed).unwrap();
    let xs = Matrix::from_vec(steps, input, (0..steps * input).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect()).unwrap();
    let targets = Matrix::from_vec(steps, 1, (0..steps).map(|_| gaussian(&mut rng, 0.0, 0.5)).collect()).unwrap();
    let mask_seed = derive_seed(seed, 2);

    let (ys, cache) = forward_sequence(&w, &xs, None, &spec, mask_seed).unwrap();
    let mut dl_dy = ys.clone();
    for (d, t) in dl_dy.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        *d -= t;
    }
    let analytic = bptt_gradients(&w, &cache, &dl_dy).unwrap().flatten();

    let mut worst: f64 = 0.0;
    let n = w.num_params();
    for k in 0..n {
        let perturbed = |delta: f64| {
            let mut wp = w.clone();
            let mut idx = k;
            for s in wp.param_slices_mut() {
                if idx < s.len() {
                    s[idx] += delta;
                    break;
                }
                idx -= s.len();
            }
            quadratic_loss(&wp, &xs, &targets, &spec, mask_seed)
        };
        let numeric = (perturbed(STEP) - perturbed(-STEP)) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic[k], numeric));
    }
    worst
}

#[test]
fn small_net_matches_finite_differences() {
    let err = max_gradient_error(2, 3, 5, DropoutSpec::NONE, 3);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn every_dropout_variant_matches_finite_differences() {
    for variant in [
        DropoutVariant::NonRecurrent,
        DropoutVariant::RecurrentConstant,
        DropoutVariant::MemoryCell,
    ] {
        let spec = DropoutSpec::new(variant, 0.3).unwrap();
        let err = max_gradient_error(3, 4, 8, spec, 11);
        assert!(err < 1e-4, "{variant:?}: max relative error {err}");
    }
}

#[test]
fn duplicated_instance_doubles_gradient() {
    let w = init_weights(2, 3, 1, 5).unwrap();
    let xs = Matrix::from_rows(&(0..6).map(|t| vec![t as f64 * 0.2, -0.4]).collect::<Vec<_>>()).unwrap();
    let (ys, cache) = forward_sequence(&w, &xs, None, &DropoutSpec::NONE, 0).unwrap();
    let single = bptt_gradients(&w, &cache, &ys).unwrap();
    let mut sum = single.clone();
    sum.add_assign(&bptt_gradients(&w, &cache, &ys).unwrap());
    for (a, b) in sum.flatten().iter().zip(single.flatten()) {
        assert_eq!(*a, 2.0 * b);
    }
}
