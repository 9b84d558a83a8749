//! Soft-voting classifier over a random forest, boosted stumps and logistic
//! regression, with an optional stacked mode and k-fold grid search.

pub mod boost;
pub mod forest;
pub mod logistic;
pub mod search;
pub mod tree;

pub use boost::{boost_rounds, leaf_weight, subsample_plan, train_gbt_stumps, BoostParams, BoostedStumpsModel, Objective, Stump};
pub use forest::{forest_plan, grow_forest, train_random_forest, ClassWeight, Criterion, ForestModel, ForestParams, MaxFeatures, TreePlan};
pub use logistic::{logistic_gradient, logistic_objective, train_logistic_regression, LogisticModel, LogisticParams, Penalty};
pub use search::{grid_cells, grid_search_cv, stratified_folds, GridResult, ParamGrid};
pub use tree::{best_split, gini, DecisionTree, Node, SplitChoice, TreeParams};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("training data holds a single class")]
    SingleClass,
    #[error("{samples} samples, need at least {needed}")]
    TooFewSamples { samples: usize, needed: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("label {0} outside {{0, 1}}")]
    BadLabel(u8),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("{k} folds exceed the smallest class size {min_class}")]
    TooManyFolds { k: usize, min_class: usize },
    #[error("unsupported model document version {0}")]
    Version(u32),
}

pub(crate) fn check_training(x: &Array2<f64>, y: &[u8]) -> Result<(), EnsembleError> {
    if x.nrows() != y.len() {
        return Err(EnsembleError::LengthMismatch { features: x.nrows(), labels: y.len() });
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(EnsembleError::BadLabel(bad));
    }
    let ones = y.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(EnsembleError::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// Weighted average of the three members' probabilities.
    #[default]
    SoftVote,
    /// Logistic regression over out-of-fold forest and booster probabilities.
    Stacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub mode: VoteMode,
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub logistic: LogisticParams,
    /// Forest, booster, logistic regression.
    pub weights: [f64; 3],
    /// Folds producing the out-of-fold probabilities of stacked mode.
    pub stack_folds: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            mode: VoteMode::SoftVote,
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            logistic: LogisticParams::default(),
            weights: [1.0 / 3.0; 3],
            stack_folds: 5,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::Config(format!("voting weights must be >= 0 and sum to 1, got {:?}", self.weights)));
        }
        if self.forest.min_samples_leaf == 0 {
            return Err(EnsembleError::Config("min_samples_leaf must be >= 1".into()));
        }
        if self.mode == VoteMode::Stacked && self.stack_folds < 2 {
            return Err(EnsembleError::Config("stacked mode needs at least 2 folds".into()));
        }
        self.boost.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema_version: u32,
    pub mode: VoteMode,
    pub weights: [f64; 3],
    pub n_features: usize,
    pub forest: ForestModel,
    pub boost: BoostedStumpsModel,
    /// On the input features in soft-vote mode; in stacked mode the meta
    /// learner over `(forest p1, booster p1)`.
    pub logistic: LogisticModel,
}

/// Weighted soft vote `sum_j w_j p_j` for one row.
pub fn soft_vote(members: &[[f64; 2]], weights: &[f64]) -> [f64; 2] {
    let mut acc = [0.0, 0.0];
    for (p, &w) in members.iter().zip(weights) {
        acc[0] += w * p[0];
        acc[1] += w * p[1];
    }
    acc
}

/// Class with the larger probability; ties go to class 0.
pub fn vote_label(p: [f64; 2]) -> u8 {
    (p[1] > p[0]) as u8
}

pub fn ensemble_fit(x: &Array2<f64>, y: &[u8], config: &EnsembleConfig, seed: u64) -> Result<EnsembleModel, EnsembleError> {
    check_training(x, y)?;
    config.validate()?;
    let forest_seed = seed;
    let boost_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let forest = train_random_forest(x, y, &config.forest, forest_seed)?;
    let boost = train_gbt_stumps(x, y, &config.boost, boost_seed)?;
    let logistic = match config.mode {
        VoteMode::SoftVote => train_logistic_regression(x, y, &config.logistic)?,
        VoteMode::Stacked => {
            let folds = stratified_folds(y, config.stack_folds, seed)?;
            let mut oof = Array2::zeros((x.nrows(), 2));
            for (k, test) in folds.iter().enumerate() {
                let train: Vec<usize> = folds.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, f)| f.iter().copied()).collect();
                let (xt, yt) = (x.select(Axis(0), &train), train.iter().map(|&i| y[i]).collect::<Vec<_>>());
                let xv = x.select(Axis(0), test);
                let f = train_random_forest(&xt, &yt, &config.forest, forest_seed)?.predict_proba(&xv)?;
                let b = train_gbt_stumps(&xt, &yt, &config.boost, boost_seed)?.predict_proba(&xv)?;
                for (r, &i) in test.iter().enumerate() {
                    oof[[i, 0]] = f[[r, 1]];
                    oof[[i, 1]] = b[[r, 1]];
                }
            }
            train_logistic_regression(&oof, y, &config.logistic)?
        }
    };
    Ok(EnsembleModel {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        mode: config.mode,
        weights: config.weights,
        n_features: x.ncols(),
        forest,
        boost,
        logistic,
    })
}

impl EnsembleModel {
    /// Per-member class probabilities, each `n x 2`.
    pub fn member_proba(&self, x: &Array2<f64>) -> Result<[Array2<f64>; 3], EnsembleError> {
        if x.ncols() != self.n_features {
            return Err(EnsembleError::Dimension { got: x.ncols(), expected: self.n_features });
        }
        let f = self.forest.predict_proba(x)?;
        let b = self.boost.predict_proba(x)?;
        let l = match self.mode {
            VoteMode::SoftVote => self.logistic.predict_proba(x)?,
            VoteMode::Stacked => {
                let mut meta = Array2::zeros((x.nrows(), 2));
                meta.column_mut(0).assign(&f.column(1));
                meta.column_mut(1).assign(&b.column(1));
                self.logistic.predict_proba(&meta)?
            }
        };
        Ok([f, b, l])
    }

    /// `n x 2` class probabilities; rows sum to 1.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>, EnsembleError> {
        let [f, b, l] = self.member_proba(x)?;
        if self.mode == VoteMode::Stacked {
            return Ok(l);
        }
        let mut out = Array2::zeros((x.nrows(), 2));
        for i in 0..x.nrows() {
            let members = [[f[[i, 0]], f[[i, 1]]], [b[[i, 0]], b[[i, 1]]], [l[[i, 0]], l[[i, 1]]]];
            let p = soft_vote(&members, &self.weights);
            let total = p[0] + p[1];
            out[[i, 0]] = p[0] / total;
            out[[i, 1]] = p[1] / total;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<u8>, EnsembleError> {
        Ok(self.predict_proba(x)?.rows().into_iter().map(|r| vote_label([r[0], r[1]])).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(Box::new(EnsembleError::Version(header.schema_version)));
        }
        Ok(serde_json::from_str(s)?)
    }
}
