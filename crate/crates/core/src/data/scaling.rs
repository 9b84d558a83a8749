use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{ConsumptionMatrix, Result};

/// Per-column min/max record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Array2<f64>) -> Self {
        let mut min = vec![f64::INFINITY; data.ncols()];
        let mut max = vec![f64::NEG_INFINITY; data.ncols()];
        for row in data.outer_iter() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps values onto [0, 1]. Constant columns map to 0; values outside the
    /// fitted range are clipped.
    pub fn transform(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 {
                    ((*v - self.min[j]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        out
    }

    pub fn inverse_transform(&self, data: &Array2<f64>) -> Array2<f64> {
        let span: Array1<f64> = self.max.iter().zip(&self.min).map(|(hi, lo)| hi - lo).collect();
        let min = Array1::from(self.min.clone());
        data * &span + &min
    }
}

/// Scales a complete matrix to [0, 1] per column.
pub fn minmax_normalize(m: &ConsumptionMatrix) -> Result<(Array2<f64>, MinMaxScaler)> {
    let dense = m.to_dense()?;
    let scaler = MinMaxScaler::fit(&dense);
    Ok((scaler.transform(&dense), scaler))
}
