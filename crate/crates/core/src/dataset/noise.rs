use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gaussian, seeded_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `θ + N(0, σ)`
    White,
    /// `θ · (1 + ε)`, `ε ~ N(0, σ)`
    Relative,
}

/// Adds independent (not auto-correlated) Gaussian noise to every entry.
pub fn add_noise(series: &[f64], kind: NoiseModel, param: f64, seed: u64) -> Result<Vec<f64>> {
    if !(param > 0.0) || !param.is_finite() {
        return Err(Error::invalid(format!("noise parameter must be positive, got {param}")));
    }
    let mut rng = seeded_rng(seed);
    Ok(series
        .iter()
        .map(|&v| {
            let e = gaussian(&mut rng, 0.0, param);
            match kind {
                NoiseModel::White => v + e,
                NoiseModel::Relative => v * (1.0 + e),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{mean, std_dev};

    #[test]
    fn vanishing_noise_is_identity() {
        let s = [0.1, 0.25, 0.4];
        for kind in [NoiseModel::White, NoiseModel::Relative] {
            let out = add_noise(&s, kind, 1e-12, 3).unwrap();
            for (a, b) in s.iter().zip(&out) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn relative_noise_keeps_zero() {
        let out = add_noise(&[0.0; 100], NoiseModel::Relative, 0.07, 5).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relative_noise_std_scales_with_level() {
        let out = add_noise(&[0.5; 10_000], NoiseModel::Relative, 0.07, 8).unwrap();
        let sd = std_dev(&out);
        assert!((sd - 0.035).abs() < 0.002, "std {sd}");
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let out = add_noise(&[0.3; 10_000], NoiseModel::White, 0.04, 13).unwrap();
        let e: Vec<f64> = out.iter().map(|v| v - 0.3).collect();
        assert!((std_dev(&e) - 0.04).abs() < 0.002);
        let m = mean(&e);
        let var: f64 = e.iter().map(|x| (x - m).powi(2)).sum();
        let lag1: f64 = e.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((lag1 / var).abs() < 0.05);
    }

    #[test]
    fn non_positive_parameter_rejected() {
        assert!(add_noise(&[0.1], NoiseModel::White, 0.0, 0).is_err());
        assert!(add_noise(&[0.1], NoiseModel::Relative, -0.1, 0).is_err());
        assert!(add_noise(&[0.1], NoiseModel::Relative, f64::NAN, 0).is_err());
    }
}
