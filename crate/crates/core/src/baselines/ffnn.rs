use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_finite, dot, seeded_rng, std_dev, Matrix};

pub const CONUS_HIDDEN: usize = 100;
pub const POINT_HIDDEN: usize = 30;

/// `y = W2 · tanh(W1 x + b1) + b2`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnModel {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub hidden_size: usize,
    pub l2: f64,
    /// Set when the training target was constant; the hidden layer is then
    /// switched off and the model predicts that constant.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FfnnOptions {
    pub hidden_size: usize,
    pub l2: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for FfnnOptions {
    fn default() -> Self {
        FfnnOptions {
            hidden_size: CONUS_HIDDEN,
            l2: 0.002,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl FfnnModel {
    pub fn input_size(&self) -> usize {
        self.w1.cols()
    }

    fn hidden(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
        self.w1.matvec_acc(x, out);
        out.iter_mut().for_each(|v| *v = v.tanh());
    }

    fn predict_row(&self, x: &[f64], h: &mut [f64]) -> f64 {
        self.hidden(x, h);
        dot(&self.w2, h) + self.b2
    }

    /// Mean of squared weights (biases excluded).
    fn mean_sq_weights(&self) -> f64 {
        let n = self.w1.as_slice().len() + self.w2.len();
        (self.w1.as_slice().iter().chain(&self.w2).map(|w| w * w).sum::<f64>()) / n as f64
    }
}

/// Row-wise prediction; each output depends on its own row only.
pub fn ffnn_predict(model: &FfnnModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.input_size() {
        return Err(Error::invalid(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            model.input_size()
        )));
    }
    let mut h = vec![0.0; model.hidden_size];
    Ok((0..x.rows()).map(|i| model.predict_row(x.row(i), &mut h)).collect())
}

/// Regularized performance `(1 − λ2)·mse + λ2·msw` over the given rows.
fn objective(model: &FfnnModel, x: &Matrix, y: &[f64], rows: &[usize]) -> f64 {
    let mut h = vec![0.0; model.hidden_size];
    let mse = rows
        .iter()
        .map(|&i| (model.predict_row(x.row(i), &mut h) - y[i]).powi(2))
        .sum::<f64>()
        / rows.len() as f64;
    (1.0 - model.l2) * mse + model.l2 * model.mean_sq_weights()
}

/// Trains by mini-batch gradient descent with momentum on the regularized
/// performance of the standardized target, stopping when the validation error has not improved for
/// `patience` epochs; the best validation weights are returned.
pub fn fit_ffnn(x: &Matrix, y: &[f64], opts: &FfnnOptions) -> Result<FfnnModel> {
    let (n, d) = x.shape();
    if n < 10 {
        return Err(Error::invalid(format!("network fit needs at least 10 samples, got {n}")));
    }
    if y.len() != n {
        return Err(Error::invalid(format!("{} targets for {n} rows", y.len())));
    }
    if opts.hidden_size == 0 || opts.batch_size == 0 || !(0.0..1.0).contains(&opts.validation_fraction) {
        return Err(Error::invalid("hidden size and batch size must be positive, validation fraction in [0, 1)"));
    }
    if !(0.0..1.0).contains(&opts.l2) {
        return Err(Error::invalid("L2 weight must lie in [0, 1)"));
    }
    if !all_finite(x.as_slice()) || !all_finite(y) {
        return Err(Error::invalid("NaN or infinite value in network inputs"));
    }
    let hsize = opts.hidden_size;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_std = std_dev(y);
    if y_std <= 1e-12 * y_mean.abs().max(1.0) {
        return Ok(FfnnModel {
            w1: Matrix::zeros(hsize, d),
            b1: vec![0.0; hsize],
            w2: vec![0.0; hsize],
            b2: y_mean,
            hidden_size: hsize,
            l2: opts.l2,
            degenerate: true,
        });
    }

    // trained on the standardized target, rescaled into the output layer at the end
    let y: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
    let y = y.as_slice();
    let mut rng = seeded_rng(opts.seed);
    let in_bound = 1.0 / (d.max(1) as f64).sqrt();
    let out_bound = 1.0 / (hsize as f64).sqrt();
    let mut model = FfnnModel {
        w1: Matrix::random_uniform(hsize, d, in_bound, &mut rng),
        b1: Matrix::random_uniform(hsize, 1, in_bound, &mut rng).into_vec(),
        w2: Matrix::random_uniform(1, hsize, out_bound, &mut rng).into_vec(),
        b2: 0.0,
        hidden_size: hsize,
        l2: opts.l2,
        degenerate: false,
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * opts.validation_fraction).round() as usize;
    let (val, train) = order.split_at(n_val.min(n - 2));
    let mut train = train.to_vec();
    let val = val.to_vec();
    let monitor: &[usize] = if val.is_empty() { &train.clone() } else { &val };

    let n_weights = (hsize * d + hsize) as f64;
    let mut vel_w1 = Matrix::zeros(hsize, d);
    let mut vel_b1 = vec![0.0; hsize];
    let mut vel_w2 = vec![0.0; hsize];
    let mut vel_b2 = 0.0;
    let mut g_w1 = Matrix::zeros(hsize, d);
    let mut g_b1 = vec![0.0; hsize];
    let mut g_w2 = vec![0.0; hsize];
    let mut h = vec![0.0; hsize];
    let mut dh = vec![0.0; hsize];

    let mut best = (objective(&model, x, y, monitor), model.clone());
    let mut stale = 0;
    for _epoch in 0..opts.max_epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(opts.batch_size) {
            g_w1.fill(0.0);
            g_b1.iter_mut().for_each(|v| *v = 0.0);
            g_w2.iter_mut().for_each(|v| *v = 0.0);
            let mut g_b2 = 0.0;
            let scale = 2.0 * (1.0 - opts.l2) / chunk.len() as f64;
            for &i in chunk {
                let xi = x.row(i);
                let err = model.predict_row(xi, &mut h) - y[i];
                let e = scale * err;
                g_b2 += e;
                for k in 0..hsize {
                    g_w2[k] += e * h[k];
                    dh[k] = e * model.w2[k] * (1.0 - h[k] * h[k]);
                    g_b1[k] += dh[k];
                }
                g_w1.outer_acc(&dh, xi);
            }
            let reg = 2.0 * opts.l2 / n_weights;
            let (lr, mu) = (opts.learning_rate, opts.momentum);
            for ((v, g), w) in vel_w1
                .as_mut_slice()
                .iter_mut()
                .zip(g_w1.as_slice())
                .zip(model.w1.as_mut_slice())
            {
                *v = mu * *v - lr * (g + reg * *w);
                *w += *v;
            }
            for k in 0..hsize {
                vel_b1[k] = mu * vel_b1[k] - lr * g_b1[k];
                model.b1[k] += vel_b1[k];
                vel_w2[k] = mu * vel_w2[k] - lr * (g_w2[k] + reg * model.w2[k]);
                model.w2[k] += vel_w2[k];
            }
            vel_b2 = mu * vel_b2 - lr * g_b2;
            model.b2 += vel_b2;
        }
        let score = objective(&model, x, y, monitor);
        if !score.is_finite() {
            break;
        }
        if score < best.0 {
            best = (score, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                break;
            }
        }
    }
    let mut model = best.1;
    model.w2.iter_mut().for_each(|w| *w *= y_std);
    model.b2 = model.b2 * y_std + y_mean;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_predict_output_bias() {
        let m = FfnnModel {
            w1: Matrix::zeros(3, 2),
            b1: vec![0.0; 3],
            w2: vec![0.0; 3],
            b2: 0.5,
            hidden_size: 3,
            l2: 0.0,
            degenerate: false,
        };
        let x = Matrix::from_rows(&[vec![1.0, -4.0], vec![10.0, 2.0]]).unwrap();
        assert_eq!(ffnn_predict(&m, &x).unwrap(), vec![0.5, 0.5]);
        assert!(ffnn_predict(&m, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn matches_scalar_evaluation() {
        let w1 = Matrix::from_rows(&[vec![0.3, -0.2], vec![0.1, 0.5]]).unwrap();
        let m = FfnnModel {
            w1,
            b1: vec![0.05, -0.1],
            w2: vec![0.7, -0.4],
            b2: 0.2,
            hidden_size: 2,
            l2: 0.0,
            degenerate: false,
        };
        let (x0, x1) = (0.9, -1.3);
        let h0 = (0.3 * x0 - 0.2 * x1 + 0.05f64).tanh();
        let h1 = (0.1 * x0 + 0.5 * x1 - 0.1f64).tanh();
        let expected = 0.7 * h0 - 0.4 * h1 + 0.2;
        let got = ffnn_predict(&m, &Matrix::from_rows(&[vec![x0, x1]]).unwrap()).unwrap()[0];
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_flagged() {
        let x = Matrix::from_vec(20, 1, (0..20).map(|v| v as f64).collect()).unwrap();
        let m = fit_ffnn(&x, &[0.3; 20], &FfnnOptions::default()).unwrap();
        assert!(m.degenerate);
        assert!(ffnn_predict(&m, &x).unwrap().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn too_few_samples_rejected() {
        let x = Matrix::zeros(5, 1);
        assert!(fit_ffnn(&x, &[0.0, 1.0, 0.0, 1.0, 0.0], &FfnnOptions::default()).is_err());
    }
}
