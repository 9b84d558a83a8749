//! Synthetic smart-meter data: seasonal genuine consumers, theft consumers
//! with planted attacks, and runs of missing readings.

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::data::{daily_dates, ConsumptionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// Fraction of the days covered by a scaling or zeroing interval.
    pub interval_min: f64,
    pub interval_max: f64,
    /// Consumption inside a scaling interval is multiplied by U(0, max_scale).
    pub max_scale: f64,
    pub spikes_min: usize,
    pub spikes_max: usize,
    /// Spike days are multiplied by U(spike_low, spike_high).
    pub spike_low: f64,
    pub spike_high: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            interval_min: 0.6,
            interval_max: 0.9,
            max_scale: 0.3,
            spikes_min: 5,
            spikes_max: 15,
            spike_low: 1.2,
            spike_high: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n_consumers: usize,
    pub n_days: usize,
    pub theft_fraction: f64,
    pub missing_fraction: f64,
    /// Missing runs have a length drawn uniformly from `1..=max_run`.
    pub max_run: usize,
    /// Spread of the per-consumer base level (log scale).
    pub level_sigma: f64,
    /// Spread of the per-day multiplicative noise (log scale).
    pub noise_sigma: f64,
    pub start: NaiveDate,
    pub attacks: AttackParams,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_consumers: 800,
            n_days: 365,
            theft_fraction: 1.0 / 11.0,
            missing_fraction: 0.25,
            max_run: 20,
            level_sigma: 0.3,
            noise_sigma: 0.08,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            attacks: AttackParams::default(),
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.n_days < 90 {
            return bad("n_days must be >= 90");
        }
        if self.n_consumers == 0 {
            return bad("n_consumers must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.theft_fraction) {
            return bad("theft_fraction must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad("missing_fraction must be in [0, 1)");
        }
        if !(self.level_sigma >= 0.0 && self.noise_sigma >= 0.0) {
            return bad("level_sigma and noise_sigma must be >= 0");
        }
        if self.max_run == 0 {
            return bad("max_run must be >= 1");
        }
        let a = &self.attacks;
        if !(0.0 < a.interval_min && a.interval_min <= a.interval_max && a.interval_max <= 1.0) {
            return bad("attack interval fractions must satisfy 0 < min <= max <= 1");
        }
        if !(0.0..=1.0).contains(&a.max_scale) || a.spikes_min > a.spikes_max || !(1.0 <= a.spike_low && a.spike_low <= a.spike_high) {
            return bad("attack scale must be in [0, 1], spikes_min <= spikes_max and 1 <= spike_low <= spike_high");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    Scale { start: usize, len: usize, factor: f64 },
    Zero { start: usize, len: usize },
    Spikes { days: Vec<usize>, factors: Vec<f64> },
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Readings before missing cells were masked.
    pub clean: Array2<f64>,
    pub labels: Vec<u8>,
    /// Attacks per row; empty for genuine rows.
    pub attacks: Vec<Vec<Attack>>,
    pub missing_cells: usize,
}

/// Day of year of peak demand shared by all consumers (mid-January).
const PEAK_DAY: f64 = 15.0;

/// Genuine rows: `level * (1 + a cos(season)) * (1 + w [weekend]) * noise`
/// with lognormal level and noise and a seasonal peak jittered around a
/// common day. Theft rows start from the same model and
/// receive a scaling or zeroing interval plus, half of the time, spikes.
pub fn generate_synthetic_dataset(params: &SynthParams) -> Result<(ConsumptionMatrix, GroundTruth), PipelineError> {
    params.validate()?;
    let (n, d) = (params.n_consumers, params.n_days);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_theft = (n as f64 * params.theft_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| (i < n_theft) as u8).collect();
    labels.shuffle(&mut rng);

    let dates = daily_dates(params.start, d);
    let level_dist = LogNormal::<f64>::new(1.5, params.level_sigma).expect("valid lognormal");
    let noise = Normal::<f64>::new(0.0, params.noise_sigma).expect("valid normal");
    let peak_jitter = Normal::<f64>::new(0.0, 10.0).expect("valid normal");
    let mut clean = Array2::zeros((n, d));
    let mut attacks = Vec::with_capacity(n);
    for i in 0..n {
        let level = level_dist.sample(&mut rng);
        let season_amp = rng.random_range(0.1..0.3);
        let peak_day = PEAK_DAY + peak_jitter.sample(&mut rng);
        let weekend = rng.random_range(-0.15..0.25);
        for (j, date) in dates.iter().enumerate() {
            let doy = date.ordinal0() as f64;
            let seasonal = 1.0 + season_amp * (2.0 * std::f64::consts::PI * (doy - peak_day) / 365.25).cos();
            let wk = if date.weekday().number_from_monday() >= 6 { 1.0 + weekend } else { 1.0 };
            clean[[i, j]] = level * seasonal * wk * noise.sample(&mut rng).exp();
        }
        let mut planted = Vec::new();
        if labels[i] == 1 {
            planted.push(plant_interval(&mut clean.row_mut(i), &params.attacks, &mut rng));
            if rng.random_bool(0.5) {
                planted.push(plant_spikes(&mut clean.row_mut(i), &params.attacks, &mut rng));
            }
        }
        attacks.push(planted);
    }

    let missing = mask_runs(n, d, params.missing_fraction, params.max_run, &mut rng);
    let values = clean.iter().zip(&missing).map(|(&v, &m)| if m { None } else { Some(v) }).collect();
    let ids = (0..n).map(|i| format!("C{i:05}")).collect();
    let matrix = ConsumptionMatrix::new(ids, labels.clone(), dates, values).map_err(|e| PipelineError::stage("synth-data", e))?;
    let missing_cells = missing.iter().filter(|&&m| m).count();
    Ok((matrix, GroundTruth { clean, labels, attacks, missing_cells }))
}

fn plant_interval<R: Rng>(row: &mut ndarray::ArrayViewMut1<f64>, a: &AttackParams, rng: &mut R) -> Attack {
    let d = row.len();
    let frac = rng.random_range(a.interval_min..=a.interval_max);
    let len = ((frac * d as f64).round() as usize).clamp(1, d);
    let start = rng.random_range(0..=d - len);
    if rng.random_bool(0.5) {
        let factor = rng.random_range(0.0..=a.max_scale);
        row.slice_mut(ndarray::s![start..start + len]).mapv_inplace(|v| v * factor);
        Attack::Scale { start, len, factor }
    } else {
        row.slice_mut(ndarray::s![start..start + len]).fill(0.0);
        Attack::Zero { start, len }
    }
}

fn plant_spikes<R: Rng>(row: &mut ndarray::ArrayViewMut1<f64>, a: &AttackParams, rng: &mut R) -> Attack {
    let d = row.len();
    let k = rng.random_range(a.spikes_min..=a.spikes_max).min(d);
    let mut days: Vec<usize> = rand::seq::index::sample(rng, d, k).into_vec();
    days.sort_unstable();
    let factors: Vec<f64> = days.iter().map(|_| rng.random_range(a.spike_low..=a.spike_high)).collect();
    for (&day, &f) in days.iter().zip(&factors) {
        row[day] *= f;
    }
    Attack::Spikes { days, factors }
}

/// Marks runs of cells until exactly `round(fraction * n * d)` are missing.
fn mask_runs<R: Rng>(n: usize, d: usize, fraction: f64, max_run: usize, rng: &mut R) -> Vec<bool> {
    let target = (fraction * (n * d) as f64).round() as usize;
    let mut mask = vec![false; n * d];
    let mut count = 0;
    while count < target {
        let row = rng.random_range(0..n);
        let len = rng.random_range(1..=max_run.min(d));
        let start = rng.random_range(0..=d - len);
        for j in start..start + len {
            let cell = &mut mask[row * d + j];
            if !*cell && count < target {
                *cell = true;
                count += 1;
            }
        }
    }
    mask
}
