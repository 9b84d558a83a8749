//! One-dimensional Gaussian mixtures fitted by expectation-maximisation.

use serde::{Deserialize, Serialize};

use super::AugmentError;

/// Components lighter than this are dropped after fitting.
pub const PRUNE_WEIGHT: f64 = 0.01;
const MAX_ITER: usize = 300;
const TOL: f64 = 1e-9;

/// A fitted mixture for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnModes {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ColumnModes {
    pub fn n_modes(&self) -> usize {
        self.means.len()
    }

    /// `ln(w_k) + ln N(x | mu_k, sigma_k)` for every component.
    pub fn log_weighted_densities(&self, x: f64) -> Vec<f64> {
        (0..self.n_modes())
            .map(|k| self.weights[k].ln() + log_normal(x, self.means[k], self.stds[k]))
            .collect()
    }

    /// Posterior probability of each component having produced `x`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        softmax(&self.log_weighted_densities(x))
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values.iter().map(|&x| log_sum_exp(&self.log_weighted_densities(x))).sum()
    }
}

fn log_normal(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Fits mixtures with 1..=`max_modes` components, keeps the one with the
/// lowest Bayesian information criterion, then prunes components lighter than
/// [`PRUNE_WEIGHT`] and renormalises.
///
/// Fully deterministic: components are initialised at evenly spaced quantiles.
pub fn fit_vgm(values: &[f64], max_modes: usize) -> Result<ColumnModes, AugmentError> {
    if max_modes == 0 {
        return Err(AugmentError::Config("max_modes must be >= 1".into()));
    }
    if values.len() < max_modes {
        return Err(AugmentError::TooFewValues { values: values.len(), modes: max_modes });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AugmentError::Config("column contains non-finite values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let spread = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let floor = (1e-3 * spread).max(1e-6);
    if spread == 0.0 {
        return Ok(ColumnModes { means: vec![mean], stds: vec![floor], weights: vec![1.0] });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut best: Option<(f64, ColumnModes)> = None;
    for k in 1..=max_modes {
        let fitted = em(values, &sorted, k, floor);
        let params = (3 * k - 1) as f64;
        let bic = -2.0 * fitted.log_likelihood(values) + params * n.ln();
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fitted));
        }
    }
    Ok(prune(best.expect("at least one fit").1))
}

fn em(values: &[f64], sorted: &[f64], k: usize, floor: f64) -> ColumnModes {
    let n = values.len();
    let spread = (sorted[n - 1] - sorted[0]) / (2.0 * k as f64);
    let mut modes = ColumnModes {
        means: (0..k).map(|j| sorted[((2 * j + 1) * n) / (2 * k)]).collect(),
        stds: vec![spread.max(floor); k],
        weights: vec![1.0 / k as f64; k],
    };
    let mut resp = vec![0.0; n * k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITER {
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let logs = modes.log_weighted_densities(x);
            let lse = log_sum_exp(&logs);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-12 {
                modes.weights[j] = 1e-12;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + j] * (values[i] - mu).powi(2)).sum::<f64>() / nk;
            modes.means[j] = mu;
            modes.stds[j] = var.sqrt().max(floor);
            modes.weights[j] = nk / n as f64;
        }
        let total: f64 = modes.weights.iter().sum();
        modes.weights.iter_mut().for_each(|w| *w /= total);
        if (ll - prev).abs() <= TOL * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    modes
}

fn prune(modes: ColumnModes) -> ColumnModes {
    let keep: Vec<usize> = (0..modes.n_modes()).filter(|&k| modes.weights[k] >= PRUNE_WEIGHT).collect();
    let keep = if keep.is_empty() {
        // Unreachable with PRUNE_WEIGHT < 1/max_modes, kept for safety.
        vec![(0..modes.n_modes()).max_by(|&a, &b| modes.weights[a].total_cmp(&modes.weights[b])).unwrap()]
    } else {
        keep
    };
    let total: f64 = keep.iter().map(|&k| modes.weights[k]).sum();
    ColumnModes {
        means: keep.iter().map(|&k| modes.means[k]).collect(),
        stds: keep.iter().map(|&k| modes.stds[k]).collect(),
        weights: keep.iter().map(|&k| modes.weights[k] / total).collect(),
    }
}
