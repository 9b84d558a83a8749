//! Bagged forest of Gini trees with per-node feature subsampling.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{check_training, EnsembleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(d))`, at least 1.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(m) => m.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// `n_samples / (2 * class count)`.
    Balanced,
    Uniform,
}

impl ClassWeight {
    pub fn weights(self, y: &[u8]) -> [f64; 2] {
        match self {
            ClassWeight::Uniform => [1.0, 1.0],
            ClassWeight::Balanced => {
                let ones = y.iter().filter(|&&l| l == 1).count() as f64;
                let n = y.len() as f64;
                [n / (2.0 * (n - ones)), n / (2.0 * ones)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub min_samples_leaf: usize,
    pub class_weight: ClassWeight,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 300,
            max_features: MaxFeatures::Sqrt,
            criterion: Criterion::Gini,
            min_samples_leaf: 5,
            class_weight: ClassWeight::Balanced,
            max_depth: None,
            bootstrap: true,
        }
    }
}

/// Training rows and feature-sampling seed of one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePlan {
    pub rows: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub tree_seeds: Vec<u64>,
    pub max_features: usize,
    pub class_weight: [f64; 2],
    pub n_features: usize,
}

/// Bootstrap rows (or all rows) and a seed for every tree, derived from
/// `seed` alone so that the plan depends only on the row count.
pub fn forest_plan(n: usize, params: &ForestParams, seed: u64) -> Vec<TreePlan> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..params.n_estimators)
        .map(|_| {
            let tree_seed: u64 = master.random();
            let rows = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed ^ 0xB007_5772);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreePlan { rows, seed: tree_seed }
        })
        .collect()
}

pub fn train_random_forest(x: &Array2<f64>, y: &[u8], params: &ForestParams, seed: u64) -> Result<ForestModel, EnsembleError> {
    check_training(x, y)?;
    if x.nrows() < 2 * params.min_samples_leaf {
        return Err(EnsembleError::TooFewSamples { samples: x.nrows(), needed: 2 * params.min_samples_leaf });
    }
    Ok(grow_forest(x, y, params, &forest_plan(x.nrows(), params, seed)))
}

/// Grows one tree per plan entry.
pub fn grow_forest(x: &Array2<f64>, y: &[u8], params: &ForestParams, plan: &[TreePlan]) -> ForestModel {
    let class_weight = params.class_weight.weights(y);
    let max_features = params.max_features.resolve(x.ncols());
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(max_features),
    };
    let grow = |p: &TreePlan| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        DecisionTree::fit(x, y, class_weight, &p.rows, &tree_params, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let trees = {
        use rayon::prelude::*;
        plan.par_iter().map(grow).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees = plan.iter().map(grow).collect();
    ForestModel {
        trees,
        tree_seeds: plan.iter().map(|p| p.seed).collect(),
        max_features,
        class_weight,
        n_features: x.ncols(),
    }
}

impl ForestModel {
    /// Mean of the tree leaf probabilities; `[0.5, 0.5]` with no trees.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>, EnsembleError> {
        if x.ncols() != self.n_features {
            return Err(EnsembleError::Dimension { got: x.ncols(), expected: self.n_features });
        }
        let mut out = Array2::zeros((x.nrows(), 2));
        for (i, row) in x.rows().into_iter().enumerate() {
            let p = if self.trees.is_empty() {
                [0.5, 0.5]
            } else {
                let mut acc = [0.0, 0.0];
                for t in &self.trees {
                    let q = t.predict_row(row);
                    acc[0] += q[0];
                    acc[1] += q[1];
                }
                let k = self.trees.len() as f64;
                [acc[0] / k, acc[1] / k]
            };
            out[[i, 0]] = p[0];
            out[[i, 1]] = p[1];
        }
        Ok(out)
    }
}
