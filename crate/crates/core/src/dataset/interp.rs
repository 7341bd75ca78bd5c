use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{all_finite, least_squares, Matrix};

/// Land-surface-model layer bounds in cm.
pub const LAYER_BOUNDS_CM: [(f64, f64); 4] = [(0.0, 10.0), (10.0, 40.0), (40.0, 100.0), (100.0, 200.0)];

/// Depth of the sensed surface layer in cm.
const SURFACE_DEPTH_CM: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMethod {
    /// top layer mean as-is
    Direct,
    /// line through the centres of the top two layers
    Linear,
    /// quadratic whose integrals over the top three layers reproduce their
    /// means
    Integral,
}

/// Estimates the 0-5 cm mean moisture from four layer means.
pub fn vertical_interpolate(layer_means: &[f64; 4], method: InterpolationMethod) -> Result<f64> {
    if !all_finite(layer_means) {
        return Err(Error::NumericInput("layer means must be finite".into()));
    }
    let centre = |(a, b): (f64, f64)| 0.5 * (a + b);
    let value = match method {
        InterpolationMethod::Direct => layer_means[0],
        InterpolationMethod::Linear => {
            let (z1, z2) = (centre(LAYER_BOUNDS_CM[0]), centre(LAYER_BOUNDS_CM[1]));
            let slope = (layer_means[1] - layer_means[0]) / (z2 - z1);
            // the profile is linear, so its 0-5 cm mean is its value at 2.5 cm
            layer_means[0] + slope * (0.5 * SURFACE_DEPTH_CM - z1)
        }
        InterpolationMethod::Integral => {
            // (1/(b-a)) ∫_a^b (c0 + c1 z + c2 z²) dz = c0 + c1 (a+b)/2 + c2 (a²+ab+b²)/3
            let row = |(a, b): (f64, f64)| vec![1.0, 0.5 * (a + b), (a * a + a * b + b * b) / 3.0];
            let system = Matrix::from_rows(&LAYER_BOUNDS_CM[..3].iter().map(|&l| row(l)).collect::<Vec<_>>())?;
            let coef = least_squares(&system, &layer_means[..3])?;
            let r = row((0.0, SURFACE_DEPTH_CM));
            coef.iter().zip(&r).map(|(c, x)| c * x).sum()
        }
    };
    Ok(value)
}
