//! L2-regularised logistic regression fitted by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{check_training, EnsembleError};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub penalty: Penalty,
    /// Inverse regularisation strength.
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { penalty: Penalty::L2, c: 100.0, tol: 1e-8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Mean log-loss plus `(1/C) * 0.5 * |w|^2`; the bias is not penalised.
pub fn logistic_objective(x: &Array2<f64>, y: &[u8], w: &Array1<f64>, b: f64, c: f64) -> f64 {
    let n = x.nrows() as f64;
    let z = x.dot(w) + b;
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| {
            // log(1 + e^z) - t z, computed without overflow.
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - t as f64 * z
        })
        .sum();
    loss / n + 0.5 * w.dot(w) / c
}

/// Gradient of [`logistic_objective`]: weights first, bias last.
pub fn logistic_gradient(x: &Array2<f64>, y: &[u8], w: &Array1<f64>, b: f64, c: f64) -> Array1<f64> {
    let n = x.nrows() as f64;
    let z = x.dot(w) + b;
    let r: Array1<f64> = z.iter().zip(y).map(|(&z, &t)| sigmoid(z) - t as f64).collect();
    let mut g = Array1::zeros(w.len() + 1);
    g.slice_mut(ndarray::s![..w.len()]).assign(&(x.t().dot(&r) / n + w / c));
    g[w.len()] = r.sum() / n;
    g
}

pub fn train_logistic_regression(x: &Array2<f64>, y: &[u8], params: &LogisticParams) -> Result<LogisticModel, EnsembleError> {
    check_training(x, y)?;
    if !(params.c > 0.0) {
        return Err(EnsembleError::Config(format!("C must be > 0, got {}", params.c)));
    }
    let (n, d) = x.dim();
    let c = params.c;
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut grad = logistic_gradient(x, y, &w, b, c);
    let mut f = logistic_objective(x, y, &w, b, c);
    let mut iterations = 0;
    while iterations < params.max_iter && norm(&grad) >= params.tol {
        iterations += 1;
        // Hessian over (w, b).
        let z = x.dot(&w) + b;
        let s: Vec<f64> = z.iter().map(|&z| sigmoid(z) * (1.0 - sigmoid(z))).collect();
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (i, row) in x.rows().into_iter().enumerate() {
            let si = s[i] / n as f64;
            for a in 0..=d {
                let xa = if a < d { row[a] } else { 1.0 };
                if xa == 0.0 {
                    continue;
                }
                for bb in a..=d {
                    let xb = if bb < d { row[bb] } else { 1.0 };
                    hess[(a, bb)] += si * xa * xb;
                }
            }
        }
        for a in 0..=d {
            if a < d {
                hess[(a, a)] += 1.0 / c;
            }
            for bb in 0..a {
                hess[(a, bb)] = hess[(bb, a)];
            }
        }
        let rhs = DVector::from_iterator(d + 1, grad.iter().copied());
        let step = solve_damped(hess, &rhs);

        // Armijo backtracking; the Newton direction is a descent direction.
        let slope = rhs.dot(&step);
        let dw = Array1::from_iter(step.iter().take(d).copied());
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-10 {
            let w_new = &w - &(&dw * t);
            let b_new = b - t * step[d];
            let f_new = logistic_objective(x, y, &w_new, b_new, c);
            // Near the optimum the objective stops resolving the decrease;
            // a full step that shrinks the gradient is then taken.
            let shrinks = t == 1.0 && norm(&logistic_gradient(x, y, &w_new, b_new, c)) < 0.5 * norm(&grad);
            if f_new <= f - 1e-4 * t * slope || shrinks {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        grad = logistic_gradient(x, y, &w, b, c);
        if !accepted {
            break;
        }
    }
    let gradient_norm = norm(&grad);
    Ok(LogisticModel { weights: w.to_vec(), bias: b, c, converged: gradient_norm < params.tol, iterations, gradient_norm })
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Solves `H s = g`, adding diagonal damping until `H` factorises.
fn solve_damped(hess: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let mut damping = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += damping;
        }
        if let Some(ch) = h.cholesky() {
            return ch.solve(g);
        }
        damping = if damping == 0.0 { 1e-10 } else { damping * 10.0 };
    }
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn probability(&self, row: ArrayView1<f64>) -> f64 {
        sigmoid(row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>, EnsembleError> {
        if x.ncols() != self.n_features() {
            return Err(EnsembleError::Dimension { got: x.ncols(), expected: self.n_features() });
        }
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.rows().into_iter().enumerate() {
            let p = self.probability(row);
            out[[i, 0]] = 1.0 - p;
            out[[i, 1]] = p;
        }
        Ok(out)
    }
}
