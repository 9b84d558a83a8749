//! Mode-specific normalisation: each value becomes a scaled offset from a
//! sampled mixture mode plus a one-hot indicator of that mode.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_vgm, AugmentError, ColumnModes};

/// `alpha = (x - mu_k) / (SCALE * sigma_k)`.
pub const SCALE: f64 = 4.0;

/// Encoding of one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsnValue {
    pub alpha: f64,
    pub mode: usize,
}

/// Samples a mode in proportion to its responsibility for `x` and returns the
/// clipped offset from it.
pub fn msn_encode<R: Rng + ?Sized>(x: f64, modes: &ColumnModes, rng: &mut R) -> MsnValue {
    let probs = modes.responsibilities(x);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut mode = probs.len() - 1;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            mode = k;
            break;
        }
    }
    MsnValue { alpha: alpha_for(x, modes, mode), mode }
}

pub fn alpha_for(x: f64, modes: &ColumnModes, mode: usize) -> f64 {
    ((x - modes.means[mode]) / (SCALE * modes.stds[mode])).clamp(-1.0, 1.0)
}

/// `x = alpha * 4 sigma_k + mu_k`, optionally clamped at zero.
pub fn msn_decode(value: MsnValue, modes: &ColumnModes, nonnegative: bool) -> Result<f64, AugmentError> {
    if value.mode >= modes.n_modes() {
        return Err(AugmentError::NoMode);
    }
    let x = value.alpha * SCALE * modes.stds[value.mode] + modes.means[value.mode];
    Ok(if nonnegative { x.max(0.0) } else { x })
}

/// Column-wise mode-specific normalisation of a matrix.
///
/// Each original column `c` becomes `1 + K_c` encoded columns: `alpha`
/// followed by the mode indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsnTransformer {
    pub columns: Vec<ColumnModes>,
    /// Clamp decoded values at zero (raw consumption); off for latent features.
    pub nonnegative: bool,
}

impl MsnTransformer {
    pub fn fit(data: &Array2<f64>, max_modes: usize, nonnegative: bool) -> Result<Self, AugmentError> {
        let max_modes = max_modes.min(data.nrows()).max(1);
        let columns = data
            .columns()
            .into_iter()
            .map(|c| fit_vgm(&c.to_vec(), max_modes))
            .collect::<Result<_, _>>()?;
        Ok(Self { columns, nonnegative })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn encoded_width(&self) -> usize {
        self.columns.iter().map(|c| 1 + c.n_modes()).sum()
    }

    /// `(alpha column, first indicator column, mode count)` per original column.
    pub fn layout(&self) -> Vec<(usize, usize, usize)> {
        let mut at = 0;
        self.columns
            .iter()
            .map(|c| {
                let entry = (at, at + 1, c.n_modes());
                at += 1 + c.n_modes();
                entry
            })
            .collect()
    }

    pub fn encode<R: Rng + ?Sized>(&self, data: &Array2<f64>, rng: &mut R) -> Result<Array2<f64>, AugmentError> {
        if data.ncols() != self.n_columns() {
            return Err(AugmentError::Dimension { got: data.ncols(), expected: self.n_columns() });
        }
        let layout = self.layout();
        let mut out = Array2::zeros((data.nrows(), self.encoded_width()));
        for (i, row) in data.rows().into_iter().enumerate() {
            for (c, &(a, first, _)) in layout.iter().enumerate() {
                let v = msn_encode(row[c], &self.columns[c], rng);
                out[[i, a]] = v.alpha;
                out[[i, first + v.mode]] = 1.0;
            }
        }
        Ok(out)
    }

    /// Decodes rows whose indicator blocks may hold any scores; the largest
    /// score in each block selects the mode and `alpha` is clipped to [-1, 1].
    pub fn decode(&self, encoded: &Array2<f64>) -> Result<Array2<f64>, AugmentError> {
        if encoded.ncols() != self.encoded_width() {
            return Err(AugmentError::Dimension { got: encoded.ncols(), expected: self.encoded_width() });
        }
        let layout = self.layout();
        let mut out = Array2::zeros((encoded.nrows(), self.n_columns()));
        for (i, row) in encoded.rows().into_iter().enumerate() {
            for (c, &(a, first, k)) in layout.iter().enumerate() {
                let mode = argmax(row.slice(ndarray::s![first..first + k]));
                let value = MsnValue { alpha: row[a].clamp(-1.0, 1.0), mode };
                out[[i, c]] = msn_decode(value, &self.columns[c], self.nonnegative)?;
            }
        }
        Ok(out)
    }
}

/// Index of the largest entry; the first one on ties.
fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
