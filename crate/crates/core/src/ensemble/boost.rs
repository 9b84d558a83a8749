//! Gradient boosting of depth-1 regression stumps on the logistic loss with
//! second-order leaf weights.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::midpoint;
use super::{check_training, EnsembleError};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "binary:logistic")]
    BinaryLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub objective: Objective,
    pub learning_rate: f64,
    pub n_estimators: usize,
    /// Only 1 is supported.
    pub max_depth: usize,
    pub subsample: f64,
    /// L2 penalty on leaf weights, added to the hessian sum.
    pub reg_lambda: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            objective: Objective::BinaryLogistic,
            learning_rate: 0.03,
            n_estimators: 500,
            max_depth: 1,
            subsample: 0.4,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.max_depth != 1 {
            return Err(EnsembleError::Config(format!("boosted trees must have max_depth 1, got {}", self.max_depth)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(EnsembleError::Config(format!("subsample must be in (0, 1], got {}", self.subsample)));
        }
        if !(self.learning_rate > 0.0) || self.reg_lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(EnsembleError::Config("learning_rate must be > 0 and reg_lambda, min_child_weight >= 0".into()));
        }
        Ok(())
    }
}

/// A depth-1 tree. Rows with `x[feature] <= threshold` score `left`. A stump
/// without an admissible split has an infinite threshold and equal leaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    pub fn score(&self, row: ArrayView1<f64>) -> f64 {
        if row[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumpsModel {
    pub stumps: Vec<Stump>,
    pub learning_rate: f64,
    /// Log-odds of the class-1 training prior.
    pub base_score: f64,
    pub n_features: usize,
}

/// Newton step of a leaf: `-G / (H + lambda)`.
pub fn leaf_weight(g: &[f64], h: &[f64], lambda: f64) -> f64 {
    -g.iter().sum::<f64>() / (h.iter().sum::<f64>() + lambda)
}

/// Row subset for every round, derived from `seed` and the row count only.
pub fn subsample_plan(n: usize, params: &BoostParams, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = ((params.subsample * n as f64).round() as usize).clamp(1, n.max(1));
    (0..params.n_estimators)
        .map(|_| {
            if take >= n {
                (0..n).collect()
            } else {
                let mut rows = sample(&mut rng, n, take).into_vec();
                rows.sort_unstable();
                rows
            }
        })
        .collect()
}

pub fn train_gbt_stumps(x: &Array2<f64>, y: &[u8], params: &BoostParams, seed: u64) -> Result<BoostedStumpsModel, EnsembleError> {
    check_training(x, y)?;
    params.validate()?;
    Ok(boost_rounds(x, y, params, &subsample_plan(x.nrows(), params, seed)))
}

/// One boosting round per entry of `plan`, each fitted on that row subset.
pub fn boost_rounds(x: &Array2<f64>, y: &[u8], params: &BoostParams, plan: &[Vec<usize>]) -> BoostedStumpsModel {
    let n = x.nrows();
    let prior = y.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut margin = vec![base_score; n];
    let mut stumps = Vec::with_capacity(plan.len());
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for rows in plan {
        for &r in rows {
            let p = sigmoid(margin[r]);
            g[r] = p - y[r] as f64;
            h[r] = p * (1.0 - p);
        }
        let stump = fit_stump(x, &g, &h, rows, params);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.learning_rate * stump.score(x.row(i));
        }
        stumps.push(stump);
    }
    BoostedStumpsModel { stumps, learning_rate: params.learning_rate, base_score, n_features: x.ncols() }
}

/// Split maximising `G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)`; ties go to
/// the lower feature, then the lower threshold. Needs a strictly positive gain.
fn fit_stump(x: &Array2<f64>, g: &[f64], h: &[f64], rows: &[usize], params: &BoostParams) -> Stump {
    let lambda = params.reg_lambda;
    let (gs, hs): (f64, f64) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + g[r], b + h[r]));
    let root = gs * gs / (hs + lambda);
    let leaf = -gs / (hs + lambda);
    let mut best = Stump { feature: 0, threshold: f64::INFINITY, left: leaf, right: leaf };
    let mut best_gain = 0.0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for f in 0..x.ncols() {
        order.clear();
        order.extend(rows.iter().map(|&r| (x[[r, f]], r)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for i in 0..order.len().saturating_sub(1) {
            let r = order[i].1;
            gl += g[r];
            hl += h[r];
            if order[i].0 == order[i + 1].0 {
                continue;
            }
            let (gr, hr) = (gs - gl, hs - hl);
            if hl < params.min_child_weight || hr < params.min_child_weight {
                continue;
            }
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - root;
            if gain > best_gain {
                best_gain = gain;
                best = Stump {
                    feature: f,
                    threshold: midpoint(order[i].0, order[i + 1].0),
                    left: -gl / (hl + lambda),
                    right: -gr / (hr + lambda),
                };
            }
        }
    }
    best
}

impl BoostedStumpsModel {
    pub fn margin(&self, row: ArrayView1<f64>) -> f64 {
        self.base_score + self.learning_rate * self.stumps.iter().map(|s| s.score(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>, EnsembleError> {
        if x.ncols() != self.n_features {
            return Err(EnsembleError::Dimension { got: x.ncols(), expected: self.n_features });
        }
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.rows().into_iter().enumerate() {
            let p = sigmoid(self.margin(row));
            out[[i, 0]] = 1.0 - p;
            out[[i, 1]] = p;
        }
        Ok(out)
    }
}
