use hlstm_core::baselines::*;
use hlstm_core::kernel::{gaussian, seeded_rng, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ols_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, d) = x.shape();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let b = DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    ata.cholesky().unwrap().solve(&atb).iter().copied().collect()
}

fn random_problem(seed: u64, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect()).unwrap();
    let beta: Vec<f64> = (0..d).map(|j| if j % 3 == 0 { 0.0 } else { gaussian(&mut rng, 0.0, 1.0) }).collect();
    let y = (0..n)
        .map(|i| 0.7 + x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + gaussian(&mut rng, 0.0, 0.3))
        .collect();
    (x, y)
}

fn kkt_violation(x: &Matrix, y: &[f64], m: &LassoModel) -> f64 {
    let n = x.rows() as f64;
    let pred = m.predict(x).unwrap();
    let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mut worst: f64 = 0.0;
    for (j, b) in m.coefficients.iter().enumerate() {
        let g = (0..x.rows()).map(|i| x.get(i, j) * resid[i]).sum::<f64>() / n;
        let v = if *b != 0.0 { (g.abs() - m.lambda).abs() } else { (g.abs() - m.lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

#[test]
fn lasso_without_penalty_is_ols() {
    for seed in 0..10 {
        let (x, y) = random_problem(seed, 120, 6);
        let m = fit_lasso(&x, &y, 0.0).unwrap();
        let ols = ols_oracle(&x, &y);
        assert!((m.intercept - ols[0]).abs() < 1e-8);
        for (a, b) in m.coefficients.iter().zip(&ols[1..]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn lasso_univariate_soft_threshold() {
    let mut rng = seeded_rng(4);
    let n = 200;
    let mut raw: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect();
    let m0 = raw.iter().sum::<f64>() / n as f64;
    raw.iter_mut().for_each(|v| *v -= m0);
    let s = (raw.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    raw.iter_mut().for_each(|v| *v /= s);
    let y: Vec<f64> = raw.iter().map(|v| 0.01 * v + gaussian(&mut rng, 0.0, 0.05)).collect();
    let x = Matrix::from_vec(n, 1, raw.clone()).unwrap();
    let lambda = DEFAULT_LAMBDA;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let z = raw.iter().zip(&y).map(|(a, b)| a * (b - y_mean)).sum::<f64>() / n as f64;
    let expected = z.signum() * (z.abs() - lambda).max(0.0);
    let m = fit_lasso(&x, &y, lambda).unwrap();
    assert!((m.coefficients[0] - expected).abs() < 1e-10);
}

#[test]
fn lasso_full_shrinkage_threshold() {
    let (x, y) = random_problem(9, 80, 5);
    let n = 80.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let lam_max = (0..5)
        .map(|j| {
            let xm = (0..80).map(|i| x.get(i, j)).sum::<f64>() / n;
            ((0..80).map(|i| (x.get(i, j) - xm) * (y[i] - y_mean)).sum::<f64>() / n).abs()
        })
        .fold(0.0, f64::max);
    let m = fit_lasso(&x, &y, lam_max * 1.0001).unwrap();
    assert!(m.coefficients.iter().all(|&b| b == 0.0));
    assert!((m.intercept - y_mean).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lasso_kkt_holds(seed in 0u64..10_000, n in 20usize..150, d in 1usize..12, lambda in 0.0f64..0.5) {
        let (x, y) = random_problem(seed, n, d);
        let m = fit_lasso(&x, &y, lambda).unwrap();
        prop_assert!(m.converged);
        prop_assert!(kkt_violation(&x, &y, &m) < 1e-5);
    }

    #[test]
    fn lasso_l1_norm_shrinks_with_lambda(seed in 0u64..10_000, l1 in 0.0f64..0.3, dl in 0.001f64..0.3) {
        let (x, y) = random_problem(seed, 60, 6);
        let a = fit_lasso(&x, &y, l1).unwrap();
        let b = fit_lasso(&x, &y, l1 + dl).unwrap();
        prop_assert!(a.l1_norm() >= b.l1_norm() - 1e-9);
    }

    #[test]
    fn ffnn_is_row_stateless(seed in 0u64..1000, rows in 2usize..20) {
        let mut rng = seeded_rng(seed);
        let m = FfnnModel {
            w1: Matrix::random_uniform(4, 3, 1.0, &mut rng),
            b1: vec![0.1, -0.2, 0.3, 0.0],
            w2: vec![0.5, -1.0, 0.25, 2.0],
            b2: 0.1,
            hidden_size: 4,
            l2: 0.0,
            degenerate: false,
        };
        let x = Matrix::random_uniform(rows, 3, 2.0, &mut rng);
        let pred = ffnn_predict(&m, &x).unwrap();
        let perm: Vec<usize> = (0..rows).rev().collect();
        let permuted = ffnn_predict(&m, &x.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(permuted[k].to_bits(), pred[i].to_bits());
        }
    }
}

fn ar1_series(seed: u64, n: usize, alpha: f64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let mut v = vec![0.0; n];
    for t in 1..n {
        v[t] = alpha * v[t - 1] + gaussian(&mut rng, 0.0, 0.1);
    }
    v
}

#[test]
fn ar_order_zero_is_exogenous_ols() {
    let (x, y) = random_problem(21, 100, 3);
    let m = fit_ar(&y, &vec![true; 100], &x, 0, 0..100, "p").unwrap();
    let ols = ols_oracle(&x, &y);
    assert!((m.intercept - ols[0]).abs() < 1e-10);
    for (a, b) in m.exog_coefs.iter().zip(&ols[1..]) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn ar_recovers_lag_coefficient() {
    let n = 1000;
    let s = ar1_series(3, n, 0.8);
    let m = fit_ar(&s, &vec![true; n], &Matrix::zeros(n, 0), 1, 0..n, "p").unwrap();
    assert!((m.lag_coefs[0] - 0.8).abs() < 0.02, "alpha {}", m.lag_coefs[0]);
}

#[test]
fn ar_order_sweep_selects_one_lag() {
    let n = 1000;
    let s = ar1_series(3, n, 0.8);
    let sweep = select_ar_order(&s, &vec![true; n], &Matrix::zeros(n, 0), 0..800, 800..n, ArEvalMode::Filter, AR_ORDER_TOLERANCE, "p").unwrap();
    assert!(sweep.errors[1].unwrap() < sweep.errors[0].unwrap());
    assert_eq!(sweep.best.order, 1);
}

#[test]
fn forecast_ignores_observations_inside_window() {
    let n = 300;
    let s = ar1_series(8, n, 0.7);
    let x = Matrix::from_vec(n, 1, (0..n).map(|t| (t as f64 * 0.1).sin()).collect()).unwrap();
    let m = fit_ar(&s, &vec![true; n], &x, 2, 0..200, "p").unwrap();
    let window = x.slice_rows(200, n);
    let warmup = &s[198..200];
    let base = ar_forecast(&m, &window, warmup).unwrap();
    // the sentinel is visible to the filter but not to the forecast
    let mut obs = vec![None; n - 200];
    obs[10] = Some(99.0);
    let filtered = ar_filter(&m, &window, &obs, warmup).unwrap();
    assert_ne!(filtered[11], base[11]);
    let mut poisoned = s.clone();
    poisoned[210] = 99.0;
    let again = ar_forecast(&m, &window, &poisoned[198..200]).unwrap();
    assert_eq!(base, again);
}

#[test]
fn ffnn_fits_linear_data() {
    let mut rng = seeded_rng(2);
    let n = 400;
    let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| gaussian(&mut rng, 0.0, 1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|i| 0.3 + 0.05 * x.get(i, 0) - 0.02 * x.get(i, 1)).collect();
    let opts = FfnnOptions { hidden_size: 8, seed: 1, ..Default::default() };
    let m = fit_ffnn(&x, &y, &opts).unwrap();
    let pred = ffnn_predict(&m, &x).unwrap();
    let rmse = (pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sd = hlstm_core::kernel::std_dev(&y);
    assert!(rmse < 0.01 * sd, "rmse {rmse}, std {sd}");
}
