//! Synthetic gridded soil-moisture benchmark built on a heterogeneous leaky
//! bucket:
//!
//! ```text
//! θ[t+1] = clamp(θ[t] + (inf·P[t] − ET[t]·θ[t] − k·θ[t]^b) / depth, residual, porosity)
//! ```
//!
//! Each pixel draws its bucket parameters (which become its static
//! attributes) and its climate from configurable ranges, then produces a
//! dense clean series plus a noisy, sub-sampled target.

use chrono::{Datelike, Months, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::noise::{add_noise, NoiseModel};
use super::{GridDataset, PixelSeries};
use crate::error::{Error, Result};
use crate::kernel::{derive_seed, gaussian, seeded_rng, uniform, Matrix, SeededRng};

pub const FORCING_NAMES: [&str; 3] = ["precipitation", "temperature", "radiation"];
pub const ATTRIBUTE_NAMES: [&str; 7] = [
    "porosity",
    "residual",
    "infiltration",
    "et_coefficient",
    "drainage_k",
    "drainage_exponent",
    "depth_mm",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketParams {
    pub porosity: f64,
    pub residual: f64,
    pub infiltration: f64,
    pub et_coefficient: f64,
    pub drainage_k: f64,
    pub drainage_exponent: f64,
    pub depth_mm: f64,
}

impl BucketParams {
    /// One daily update given precipitation (mm) and potential ET (mm/day).
    pub fn step(&self, theta: f64, precip: f64, pet: f64) -> f64 {
        let et = self.et_coefficient * pet;
        let flux = self.infiltration * precip - et * theta - self.drainage_k * theta.powf(self.drainage_exponent);
        (theta + flux / self.depth_mm).clamp(self.residual, self.porosity)
    }

    fn as_attributes(&self) -> Vec<f64> {
        vec![
            self.porosity,
            self.residual,
            self.infiltration,
            self.et_coefficient,
            self.drainage_k,
            self.drainage_exponent,
            self.depth_mm,
        ]
    }
}

/// `[lo, hi]` sampling ranges for the bucket parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BucketRanges {
    pub porosity: [f64; 2],
    pub residual: [f64; 2],
    pub infiltration: [f64; 2],
    pub et_coefficient: [f64; 2],
    pub drainage_k: [f64; 2],
    pub drainage_exponent: [f64; 2],
    pub depth_mm: [f64; 2],
}

impl Default for BucketRanges {
    fn default() -> Self {
        BucketRanges {
            porosity: [0.40, 0.50],
            residual: [0.08, 0.12],
            infiltration: [0.5, 0.9],
            et_coefficient: [0.8, 1.4],
            drainage_k: [10.0, 40.0],
            drainage_exponent: [2.5, 4.0],
            depth_mm: [80.0, 150.0],
        }
    }
}

impl BucketRanges {
    fn sample(&self, rng: &mut SeededRng) -> BucketParams {
        let mut u = |r: [f64; 2]| uniform(rng, r[0], r[1]);
        BucketParams {
            porosity: u(self.porosity),
            residual: u(self.residual),
            infiltration: u(self.infiltration),
            et_coefficient: u(self.et_coefficient),
            drainage_k: u(self.drainage_k),
            drainage_exponent: u(self.drainage_exponent),
            depth_mm: u(self.depth_mm),
        }
    }

    fn midpoint(&self) -> BucketParams {
        let m = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
        BucketParams {
            porosity: m(self.porosity),
            residual: m(self.residual),
            infiltration: m(self.infiltration),
            et_coefficient: m(self.et_coefficient),
            drainage_k: m(self.drainage_k),
            drainage_exponent: m(self.drainage_exponent),
            depth_mm: m(self.depth_mm),
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            ("porosity", self.porosity),
            ("residual", self.residual),
            ("infiltration", self.infiltration),
            ("et_coefficient", self.et_coefficient),
            ("drainage_k", self.drainage_k),
            ("drainage_exponent", self.drainage_exponent),
            ("depth_mm", self.depth_mm),
        ];
        for (name, [lo, hi]) in all {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("bucket range {name} must satisfy lo <= hi")));
            }
        }
        if self.residual[1] >= self.porosity[0] {
            return Err(Error::invalid("porosity must exceed residual moisture"));
        }
        if self.depth_mm[0] <= 0.0 || self.residual[0] < 0.0 || self.porosity[1] > 1.0 {
            return Err(Error::invalid("depth must be positive and moisture bounds within [0, 1]"));
        }
        Ok(())
    }
}

/// Per-pixel climate ranges for the stochastic weather generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimateRanges {
    pub wet_day_probability: [f64; 2],
    pub mean_depth_mm: [f64; 2],
    pub temperature_offset: [f64; 2],
}

impl Default for ClimateRanges {
    fn default() -> Self {
        ClimateRanges {
            wet_day_probability: [0.2, 0.45],
            mean_depth_mm: [5.0, 12.0],
            temperature_offset: [-3.0, 3.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    White { sigma: f64 },
    Relative { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationSchedule {
    /// Observed every `interval_days` days with a per-pixel phase.
    Fixed { interval_days: usize },
    /// Each day observed independently with `probability`.
    Bernoulli { probability: f64 },
}

/// Adds a simulated land-surface-model channel: the bucket run with the
/// midpoint parameters of every range (so it ignores pixel heterogeneity)
/// plus a pixel offset `bias_amplitude · u`, where `u ∈ [-1, 1]` is the
/// pixel's porosity rescaled over its range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsmConfig {
    pub bias_amplitude: f64,
}

/// Region labels from rectangular blocks: `R<block row>_<block col>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    pub block_rows: usize,
    pub block_cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub cols: usize,
    pub years: u32,
    pub start_date: NaiveDate,
    pub bucket: BucketRanges,
    pub climate: ClimateRanges,
    pub noise: NoiseKind,
    pub observation: ObservationSchedule,
    pub lsm: Option<LsmConfig>,
    pub regions: Option<RegionLayout>,
    /// When set, porosity rises from the first to the last grid column
    /// instead of being drawn independently; the value is the jitter, as a
    /// fraction of the porosity range.
    pub porosity_gradient: Option<f64>,
    /// Amplitude of a pixel offset added to the clean target, scaled like the
    /// lsm offset by the pixel's rescaled porosity.
    pub target_bias: Option<f64>,
    pub spinup_days: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            rows: 4,
            cols: 4,
            years: 3,
            start_date: NaiveDate::from_ymd_opt(2005, 1, 1).unwrap(),
            bucket: BucketRanges::default(),
            climate: ClimateRanges::default(),
            noise: NoiseKind::None,
            observation: ObservationSchedule::Fixed { interval_days: 3 },
            lsm: None,
            regions: None,
            porosity_gradient: None,
            target_bias: None,
            spinup_days: 365,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.years == 0 {
            return Err(Error::invalid("grid dimensions and years must be positive"));
        }
        self.bucket.validate()?;
        let c = &self.climate;
        if !(0.0..=1.0).contains(&c.wet_day_probability[0])
            || !(0.0..=1.0).contains(&c.wet_day_probability[1])
            || c.wet_day_probability[0] > c.wet_day_probability[1]
            || c.mean_depth_mm[0] <= 0.0
            || c.mean_depth_mm[0] > c.mean_depth_mm[1]
            || c.temperature_offset[0] > c.temperature_offset[1]
        {
            return Err(Error::invalid("invalid climate ranges"));
        }
        match self.noise {
            NoiseKind::White { sigma } | NoiseKind::Relative { sigma } if !(sigma > 0.0) => {
                return Err(Error::invalid("noise sigma must be positive"));
            }
            _ => {}
        }
        match self.observation {
            ObservationSchedule::Fixed { interval_days } if interval_days < 1 => {
                return Err(Error::invalid("revisit interval must be at least 1 day"));
            }
            ObservationSchedule::Bernoulli { probability } if !(probability > 0.0 && probability <= 1.0) => {
                return Err(Error::invalid("observation probability must lie in (0, 1]"));
            }
            _ => {}
        }
        if self.porosity_gradient.is_some_and(|j| !(j >= 0.0)) || self.target_bias.is_some_and(|a| !a.is_finite()) {
            return Err(Error::invalid("porosity jitter must be >= 0 and target bias finite"));
        }
        if let Some(r) = self.regions {
            if r.block_rows == 0 || r.block_cols == 0 {
                return Err(Error::invalid("region blocks must be non-empty"));
            }
        }
        Ok(())
    }

    pub fn n_days(&self) -> usize {
        let end = self
            .start_date
            .checked_add_months(Months::new(12 * self.years))
            .expect("date overflow");
        (end - self.start_date).num_days() as usize
    }
}

/// Daily weather for one pixel.
struct Weather {
    wet_probability: f64,
    depth: Exp<f64>,
    temperature_offset: f64,
}

impl Weather {
    /// `(precipitation mm, temperature °C, radiation W/m², PET mm/day)`
    fn day(&self, date: NaiveDate, rng: &mut SeededRng) -> (f64, f64, f64, f64) {
        let phase = 2.0 * std::f64::consts::PI * (date.ordinal0() as f64) / 365.25;
        let season = -phase.cos(); // -1 mid-winter, +1 mid-summer
        let wet = rng.random::<f64>() < (self.wet_probability * (1.0 - 0.3 * season)).clamp(0.0, 1.0);
        let precip = if wet { self.depth.sample(rng) } else { 0.0 };
        let temperature = 12.0 + self.temperature_offset + 12.0 * season + gaussian(rng, 0.0, 3.0);
        let mut radiation = (190.0 + 90.0 * season + gaussian(rng, 0.0, 30.0)).max(20.0);
        if wet {
            radiation *= 0.6;
        }
        let pet = 0.4 + 0.12 * temperature.max(0.0) + 0.008 * radiation;
        (precip, temperature, radiation, pet)
    }
}

/// Generates the full synthetic grid. Deterministic given the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<GridDataset> {
    config.validate()?;
    let n_days = config.n_days();
    let reference = config.bucket.midpoint();
    let mut pixels = Vec::with_capacity(config.rows * config.cols);

    for row in 0..config.rows {
        for col in 0..config.cols {
            let index = (row * config.cols + col) as u64;
            let mut rng = seeded_rng(derive_seed(config.seed, 3 * index));
            let mut params = config.bucket.sample(&mut rng);
            let [plo, phi] = config.bucket.porosity;
            if let Some(jitter) = config.porosity_gradient {
                let frac = if config.cols > 1 { col as f64 / (config.cols - 1) as f64 } else { 0.5 };
                let u = (frac + uniform(&mut rng, -jitter, jitter)).clamp(0.0, 1.0);
                params.porosity = plo + (phi - plo) * u;
            }
            // porosity rescaled to [-1, 1]
            let signed = if phi > plo { 2.0 * (params.porosity - plo) / (phi - plo) - 1.0 } else { 0.0 };
            let c = &config.climate;
            let weather = Weather {
                wet_probability: uniform(&mut rng, c.wet_day_probability[0], c.wet_day_probability[1]),
                depth: Exp::new(1.0 / uniform(&mut rng, c.mean_depth_mm[0], c.mean_depth_mm[1]))
                    .map_err(|e| Error::invalid(e.to_string()))?,
                temperature_offset: uniform(&mut rng, c.temperature_offset[0], c.temperature_offset[1]),
            };
            let obs_phase = rng.random_range(0..64usize);

            // spin-up on weather preceding the record
            let mut theta = 0.5 * (params.porosity + params.residual);
            let mut theta_ref = 0.5 * (reference.porosity + reference.residual);
            let spin_start = config.start_date - chrono::Duration::days(config.spinup_days as i64);
            for d in 0..config.spinup_days {
                let date = spin_start + chrono::Duration::days(d as i64);
                let (p, _, _, pet) = weather.day(date, &mut rng);
                theta = params.step(theta, p, pet);
                theta_ref = reference.step(theta_ref, p, pet);
            }

            let mut forcing = Matrix::zeros(n_days, FORCING_NAMES.len());
            let mut truth = Vec::with_capacity(n_days);
            let mut reference_run = Vec::with_capacity(n_days);
            for t in 0..n_days {
                let date = config.start_date + chrono::Duration::days(t as i64);
                let (p, temp, rad, pet) = weather.day(date, &mut rng);
                forcing.row_mut(t).copy_from_slice(&[p, temp, rad]);
                theta = params.step(theta, p, pet);
                theta_ref = reference.step(theta_ref, p, pet);
                truth.push(match config.target_bias {
                    Some(a) => (theta + a * signed).clamp(0.0, 1.0),
                    None => theta,
                });
                reference_run.push(theta_ref);
            }

            let noise_seed = derive_seed(config.seed, 3 * index + 1);
            let noisy = match config.noise {
                NoiseKind::None => truth.clone(),
                NoiseKind::White { sigma } => add_noise(&truth, NoiseModel::White, sigma, noise_seed)?,
                NoiseKind::Relative { sigma } => add_noise(&truth, NoiseModel::Relative, sigma, noise_seed)?,
            };
            let mut obs_rng = seeded_rng(derive_seed(config.seed, 3 * index + 2));
            let mask: Vec<bool> = (0..n_days)
                .map(|t| match config.observation {
                    ObservationSchedule::Fixed { interval_days } => (t + obs_phase) % interval_days == 0,
                    ObservationSchedule::Bernoulli { probability } => obs_rng.random::<f64>() < probability,
                })
                .collect();
            let target = noisy
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| if m { v.clamp(0.0, 1.0) } else { f64::NAN })
                .collect();

            let lsm = config
                .lsm
                .map(|l| reference_run.iter().map(|v| v + l.bias_amplitude * signed).collect());

            pixels.push(PixelSeries {
                id: format!("r{row:03}c{col:03}"),
                row,
                col,
                forcing,
                lsm,
                attributes: params.as_attributes(),
                target,
                mask,
                region: config
                    .regions
                    .map(|r| format!("R{}_{}", row / r.block_rows, col / r.block_cols)),
                truth: Some(truth),
            });
        }
    }

    let dataset = GridDataset {
        rows: config.rows,
        cols: config.cols,
        start_date: config.start_date,
        n_days,
        forcing_names: FORCING_NAMES.iter().map(|s| s.to_string()).collect(),
        attribute_names: ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
        pixels,
    };
    dataset.validate()?;
    Ok(dataset)
}
