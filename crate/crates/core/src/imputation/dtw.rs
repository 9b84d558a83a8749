//! Dynamic time warping with a plain squared-difference cost or the
//! derivative cost used by derivative DTW.

use serde::{Deserialize, Serialize};

use super::ImputeError;

/// Local cost used when filling the accumulated-cost grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalCost {
    /// `(a_i - b_j)^2` on the raw values.
    SquaredDifference,
    /// `(D_a[i] - D_b[j])^2` on the derivative estimates of both sequences.
    Derivative,
}

/// Derivative estimate at every interior point:
/// `((x[a] - x[a-1]) + (x[a+1] - x[a-1]) / 2) / 2`.
///
/// The output has `x.len() - 2` elements.
pub fn derivative_transform(x: &[f64]) -> Result<Vec<f64>, ImputeError> {
    if x.len() < 3 {
        return Err(ImputeError::SequenceTooShort { len: x.len(), min: 3 });
    }
    Ok(x.windows(3)
        .map(|w| ((w[1] - w[0]) + (w[2] - w[0]) / 2.0) / 2.0)
        .collect())
}

/// Accumulated-cost grid between two sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwCostMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl DtwCostMatrix {
    /// Fills the grid for `a` (rows) against `b` (columns) with the
    /// three-move recurrence `D[i][j] = c(i, j) + min(D[i-1][j], D[i][j-1], D[i-1][j-1])`.
    pub fn build(a: &[f64], b: &[f64], cost: LocalCost) -> Result<Self, ImputeError> {
        let (a, b) = prepare(a, b, cost)?;
        let (rows, cols) = (a.len(), b.len());
        let mut cells = vec![0.0f64; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let local = (a[i] - b[j]).powi(2);
                let best = match (i, j) {
                    (0, 0) => 0.0,
                    (0, _) => cells[j - 1],
                    (_, 0) => cells[(i - 1) * cols],
                    _ => cells[(i - 1) * cols + j]
                        .min(cells[i * cols + j - 1])
                        .min(cells[(i - 1) * cols + j - 1]),
                };
                cells[i * cols + j] = local + best;
            }
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn distance(&self) -> f64 {
        self.cells[self.cells.len() - 1]
    }

    /// Optimal warping path from `(0, 0)` to the last cell.
    ///
    /// Backtracks through the cheapest predecessor, preferring the diagonal,
    /// then the vertical, then the horizontal move on ties.
    pub fn warping_path(&self) -> Vec<(usize, usize)> {
        let (mut i, mut j) = (self.rows - 1, self.cols - 1);
        let mut path = vec![(i, j)];
        while i > 0 || j > 0 {
            (i, j) = if i == 0 {
                (0, j - 1)
            } else if j == 0 {
                (i - 1, 0)
            } else {
                let diag = self.at(i - 1, j - 1);
                let up = self.at(i - 1, j);
                let left = self.at(i, j - 1);
                if diag <= up && diag <= left {
                    (i - 1, j - 1)
                } else if up <= left {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            };
            path.push((i, j));
        }
        path.reverse();
        path
    }
}

fn prepare(a: &[f64], b: &[f64], cost: LocalCost) -> Result<(Vec<f64>, Vec<f64>), ImputeError> {
    if a.is_empty() || b.is_empty() {
        return Err(ImputeError::EmptySequence);
    }
    Ok(match cost {
        LocalCost::SquaredDifference => (a.to_vec(), b.to_vec()),
        LocalCost::Derivative => (derivative_transform(a)?, derivative_transform(b)?),
    })
}

/// DTW distance between two sequences.
///
/// Uses a two-row rolling buffer; equivalent to
/// `DtwCostMatrix::build(a, b, cost)?.distance()`.
pub fn dtw_cost(a: &[f64], b: &[f64], cost: LocalCost) -> Result<f64, ImputeError> {
    match cost {
        LocalCost::SquaredDifference => {
            if a.is_empty() || b.is_empty() {
                return Err(ImputeError::EmptySequence);
            }
            Ok(dtw_rolling(a, b))
        }
        LocalCost::Derivative => {
            let (da, db) = prepare(a, b, cost)?;
            Ok(dtw_rolling(&da, &db))
        }
    }
}

fn dtw_rolling(a: &[f64], b: &[f64]) -> f64 {
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0; m];
    for (i, &ai) in a.iter().enumerate() {
        for j in 0..m {
            let local = (ai - b[j]).powi(2);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = local + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}
