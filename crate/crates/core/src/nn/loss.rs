use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Probabilities are clipped to `[BCE_CLIP, 1 - BCE_CLIP]` before the log.
const BCE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean squared error over every element.
    Mse,
    /// Binary cross-entropy over every element; outputs must be probabilities.
    Bce,
    /// Mean of the outputs themselves, ignoring targets. Used for critic scores.
    RawMean,
}

impl Loss {
    pub fn value(self, output: &Array2<f64>, target: &Array2<f64>) -> f64 {
        let n = output.len().max(1) as f64;
        match self {
            Loss::Mse => output.iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum::<f64>() / n,
            Loss::Bce => {
                output
                    .iter()
                    .zip(target)
                    .map(|(&y, &t)| {
                        let p = y.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / n
            }
            Loss::RawMean => output.sum() / n,
        }
    }

    /// Derivative of `value` with respect to each output element.
    pub fn gradient(self, output: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
        let n = output.len().max(1) as f64;
        match self {
            Loss::Mse => (output - target) * (2.0 / n),
            Loss::Bce => {
                let mut g = output.clone();
                g.zip_mut_with(target, |y, &t| {
                    let p = y.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                    *y = (p - t) / (p * (1.0 - p)) / n;
                });
                g
            }
            Loss::RawMean => Array2::from_elem(output.dim(), 1.0 / n),
        }
    }
}
