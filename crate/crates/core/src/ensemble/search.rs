//! Stratified k-fold cross-validated grid search over ensemble settings.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_training, ensemble_fit, EnsembleConfig, EnsembleError};

/// Candidate values per setting. Keys are dotted paths into
/// [`EnsembleConfig`], e.g. `"forest.n_estimators"`.
pub type ParamGrid = BTreeMap<String, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub params: BTreeMap<String, Value>,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_params: BTreeMap<String, Value>,
    pub best_config: EnsembleConfig,
    pub cells: Vec<CellScore>,
}

/// Splits row indices into `k` folds. Each class is shuffled with `seed` and
/// dealt round-robin, class 0 first, so fold sizes and per-fold class counts
/// differ by at most one.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EnsembleError> {
    if k < 2 {
        return Err(EnsembleError::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in y.iter().enumerate() {
        by_class[(l == 1) as usize].push(i);
    }
    let min_class = by_class[0].len().min(by_class[1].len());
    if k > min_class {
        return Err(EnsembleError::TooManyFolds { k, min_class });
    }
    let mut folds = vec![Vec::new(); k];
    let mut at = 0;
    for class in &mut by_class {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            folds[at % k].push(i);
            at += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), EnsembleError> {
    let mut at = doc;
    for part in path.split('.') {
        at = at
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| EnsembleError::Config(format!("unknown grid parameter {path}")))?;
    }
    *at = value;
    Ok(())
}

/// Every lattice cell applied to `base`, in lexicographic order: keys sorted,
/// the last key varying fastest, values in the order given.
pub fn grid_cells(base: &EnsembleConfig, grid: &ParamGrid) -> Result<Vec<(BTreeMap<String, Value>, EnsembleConfig)>, EnsembleError> {
    if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(EnsembleError::EmptyGrid);
    }
    let keys: Vec<&String> = grid.keys().collect();
    let mut idx = vec![0usize; keys.len()];
    let mut cells = Vec::new();
    loop {
        let params: BTreeMap<String, Value> = keys.iter().zip(&idx).map(|(k, &i)| ((*k).clone(), grid[*k][i].clone())).collect();
        let mut doc = serde_json::to_value(base).expect("config serialises");
        for (k, v) in &params {
            set_path(&mut doc, k, v.clone())?;
        }
        let config: EnsembleConfig = serde_json::from_value(doc).map_err(|e| EnsembleError::Config(e.to_string()))?;
        config.validate()?;
        cells.push((params, config));

        let mut pos = keys.len();
        loop {
            if pos == 0 {
                return Ok(cells);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < grid[keys[pos]].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Mean validation accuracy of every cell over the same stratified folds;
/// the first cell in lattice order wins ties.
pub fn grid_search_cv(
    x: &Array2<f64>,
    y: &[u8],
    base: &EnsembleConfig,
    grid: &ParamGrid,
    k: usize,
    seed: u64,
) -> Result<GridResult, EnsembleError> {
    check_training(x, y)?;
    let cells = grid_cells(base, grid)?;
    let folds = stratified_folds(y, k, seed)?;
    let mut scores = Vec::with_capacity(cells.len());
    for (params, config) in &cells {
        let mut fold_accuracy = Vec::with_capacity(k);
        for (f, test) in folds.iter().enumerate() {
            let train: Vec<usize> = folds.iter().enumerate().filter(|&(j, _)| j != f).flat_map(|(_, v)| v.iter().copied()).collect();
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let model = ensemble_fit(&x.select(Axis(0), &train), &yt, config, seed)?;
            let pred = model.predict(&x.select(Axis(0), test))?;
            let hits = pred.iter().zip(test).filter(|(&p, &i)| p == y[i]).count();
            fold_accuracy.push(hits as f64 / test.len() as f64);
        }
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k as f64;
        scores.push(CellScore { params: params.clone(), fold_accuracy, mean_accuracy });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_accuracy > scores[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridResult { best_params: cells[best].0.clone(), best_config: cells[best].1.clone(), cells: scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn lattice_order() {
        let grid: ParamGrid = [
            ("forest.n_estimators".to_string(), vec![json!(10), json!(20)]),
            ("boost.learning_rate".to_string(), vec![json!(0.1), json!(0.2), json!(0.3)]),
        ]
        .into();
        let cells = grid_cells(&EnsembleConfig::default(), &grid).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].1.boost.learning_rate, 0.1);
        assert_eq!(cells[0].1.forest.n_estimators, 10);
        assert_eq!(cells[1].1.forest.n_estimators, 20);
        assert_eq!(cells[5].1.boost.learning_rate, 0.3);
    }

    #[test]
    fn unknown_path_and_empty_grid() {
        let grid: ParamGrid = [("forest.trees".to_string(), vec![json!(1)])].into();
        assert!(grid_cells(&EnsembleConfig::default(), &grid).is_err());
        assert!(matches!(grid_cells(&EnsembleConfig::default(), &ParamGrid::new()), Err(EnsembleError::EmptyGrid)));
    }

    #[test]
    fn folds_too_many() {
        assert!(matches!(stratified_folds(&[0, 0, 0, 1, 1], 3, 0), Err(EnsembleError::TooManyFolds { .. })));
    }
}
