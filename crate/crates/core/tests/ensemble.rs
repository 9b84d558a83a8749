mod common;

use common::table_config_json;
use std::collections::BTreeMap;

use ndarray::{array, Array2};
use ntl_core::ensemble::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn blobs(n: usize, d: usize, gap: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        let shift = if j < 2 { gap * y[i] as f64 } else { 0.0 };
        shift + rng.random_range(-1.0..1.0)
    });
    (x, y)
}

fn log_loss(p: &Array2<f64>, y: &[u8]) -> f64 {
    y.iter().enumerate().map(|(i, &t)| -(p[[i, t as usize]].max(1e-300)).ln()).sum::<f64>() / y.len() as f64
}

#[test]
fn forest_fits_separable_feature_exactly() {
    // Class 0 in [0, 0.45], class 1 in [0.55, 1]: any bootstrap keeps the split at 0.5 correct.
    let x = Array2::from_shape_fn((40, 1), |(i, _)| if i < 20 { i as f64 * 0.45 / 19.0 } else { 0.55 + (i - 20) as f64 * 0.45 / 19.0 });
    let y: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
    let params = ForestParams { n_estimators: 25, ..Default::default() };
    let forest = train_random_forest(&x, &y, &params, 3).unwrap();
    for tree in &forest.trees {
        for (i, &label) in y.iter().enumerate() {
            let p = tree.predict_row(x.row(i));
            assert!(p[label as usize] > 0.5, "row {i}");
        }
    }
    let p = forest.predict_proba(&x).unwrap();
    let acc = y.iter().enumerate().filter(|&(i, &l)| (p[[i, 1]] > p[[i, 0]]) as u8 == l).count();
    assert_eq!(acc, 40);
}

#[test]
fn forest_rejects_single_class_and_tiny_input() {
    let x = Array2::zeros((20, 2));
    assert!(matches!(train_random_forest(&x, &[0; 20], &ForestParams::default(), 0), Err(EnsembleError::SingleClass)));
    let y: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
    assert!(matches!(
        train_random_forest(&Array2::zeros((6, 2)), &y, &ForestParams::default(), 0),
        Err(EnsembleError::TooFewSamples { .. })
    ));
}

/// Weighted Gini of every candidate split, evaluated directly.
fn split_oracle(x: &Array2<f64>, y: &[u8], w: [f64; 2], min_leaf: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..x.ncols() {
        let mut vals: Vec<f64> = x.column(f).to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let side = |left: bool| {
                let mut acc = [0.0, 0.0];
                let mut count = 0;
                for i in 0..y.len() {
                    if (x[[i, f]] <= t) == left {
                        acc[y[i] as usize] += w[y[i] as usize];
                        count += 1;
                    }
                }
                let tot = acc[0] + acc[1];
                (count, if tot == 0.0 { 0.0 } else { tot * (1.0 - (acc[0] / tot).powi(2) - (acc[1] / tot).powi(2)) })
            };
            let (nl, sl) = side(true);
            let (nr, sr) = side(false);
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            if best.is_none_or(|b| sl + sr < b) {
                best = Some(sl + sr);
            }
        }
    }
    best
}

#[test]
fn best_split_on_six_points_matches_enumeration() {
    let x = array![[0.3], [1.2], [0.7], [2.5], [1.9], [0.1]];
    let y = [0, 1, 0, 1, 0, 0];
    let s = best_split(&x, &y, [1.0, 2.0], &[0, 1, 2, 3, 4, 5], &[0], 1).unwrap();
    assert!((s.score - split_oracle(&x, &y, [1.0, 2.0], 1).unwrap()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn split_search_matches_exhaustive(
        n in 2usize..=8,
        d in 1usize..=2,
        seed in any::<u64>(),
        w1 in 0.5f64..3.0,
        min_leaf in 1usize..=3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..4) as f64 * 0.5);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let rows: Vec<usize> = (0..n).collect();
        let features: Vec<usize> = (0..d).collect();
        let got = best_split(&x, &y, [1.0, w1], &rows, &features, min_leaf).map(|s| s.score);
        let want = split_oracle(&x, &y, [1.0, w1], min_leaf);
        match (got, want) {
            (None, None) => {}
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn unpruned_tree_memorises_consistent_data(n in 2usize..40, d in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..1000) as f64);
        // Labels are a function of the row, so duplicates never conflict.
        let y: Vec<u8> = x.rows().into_iter().map(|r| ((r.sum() as u64 * 2654435761) >> 7 & 1) as u8).collect();
        let params = TreeParams { max_depth: None, min_samples_leaf: 1, max_features: None };
        let rows: Vec<usize> = (0..n).collect();
        let tree = DecisionTree::fit(&x, &y, [1.0, 1.0], &rows, &params, &mut rng);
        for (i, &l) in y.iter().enumerate() {
            prop_assert_eq!(tree.predict_row(x.row(i))[l as usize], 1.0);
        }
    }

    #[test]
    fn probability_rows_sum_to_one(seed in 0u64..50) {
        let (x, y) = blobs(60, 4, 1.0, seed);
        let small = EnsembleConfig {
            forest: ForestParams { n_estimators: 5, ..Default::default() },
            boost: BoostParams { n_estimators: 20, ..Default::default() },
            ..Default::default()
        };
        let m = ensemble_fit(&x, &y, &small, seed).unwrap();
        let members = m.member_proba(&x).unwrap();
        for p in members.iter().chain(std::iter::once(&m.predict_proba(&x).unwrap())) {
            for r in p.rows() {
                prop_assert!((r[0] + r[1] - 1.0).abs() < 1e-9 && r[0] >= 0.0 && r[1] >= 0.0);
            }
        }
    }

    #[test]
    fn vote_matches_direct_formula(probs in prop::collection::vec(0.0f64..1.0, 3), raw in prop::collection::vec(0.0f64..1.0, 3)) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        let w: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / 3.0) / total).collect();
        let members: Vec<[f64; 2]> = probs.iter().map(|&p| [1.0 - p, p]).collect();
        let mut avg1 = 0.0;
        let mut avg0 = 0.0;
        for j in 0..3 {
            avg0 += w[j] * (1.0 - probs[j]);
            avg1 += w[j] * probs[j];
        }
        let want = if avg1 > avg0 { 1 } else { 0 };
        prop_assert_eq!(vote_label(soft_vote(&members, &w)), want);
        let scaled: Vec<[f64; 2]> = members.iter().map(|p| [p[0] * 7.5, p[1] * 7.5]).collect();
        prop_assert_eq!(vote_label(soft_vote(&scaled, &w)), want);
    }
}

#[test]
fn tree_predictions_ignore_row_order() {
    let (x, y) = blobs(80, 5, 0.8, 2);
    let params = ForestParams { n_estimators: 8, ..Default::default() };
    let plan = forest_plan(80, &params, 9);
    let forest = grow_forest(&x, &y, &params, &plan);

    let mut perm: Vec<usize> = (0..80).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let mut inverse = vec![0; 80];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let xp = x.select(ndarray::Axis(0), &perm);
    let yp: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
    let remapped: Vec<TreePlan> = plan
        .iter()
        .map(|t| TreePlan { rows: t.rows.iter().map(|&r| inverse[r]).collect(), seed: t.seed })
        .collect();
    let permuted = grow_forest(&xp, &yp, &params, &remapped);
    assert_eq!(forest.predict_proba(&x).unwrap(), permuted.predict_proba(&x).unwrap());

    let bparams = BoostParams { n_estimators: 40, ..Default::default() };
    let bplan = subsample_plan(80, &bparams, 4);
    let boost = boost_rounds(&x, &y, &bparams, &bplan);
    let bremapped: Vec<Vec<usize>> = bplan.iter().map(|rows| rows.iter().map(|&r| inverse[r]).collect()).collect();
    let bperm = boost_rounds(&xp, &yp, &bparams, &bremapped);
    let (a, b) = (boost.predict_proba(&x).unwrap(), bperm.predict_proba(&x).unwrap());
    assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
}

#[test]
fn full_sample_boosting_drives_loss_down() {
    let x = Array2::from_shape_fn((100, 1), |(i, _)| i as f64);
    let y: Vec<u8> = (0..100).map(|i| (i >= 50) as u8).collect();
    for learning_rate in [0.03, 0.1] {
        let params = BoostParams { subsample: 1.0, learning_rate, ..Default::default() };
        let mut prev = f64::INFINITY;
        for rounds in 0..=50 {
            let m = train_gbt_stumps(&x, &y, &BoostParams { n_estimators: rounds, ..params.clone() }, 0).unwrap();
            let loss = log_loss(&m.predict_proba(&x).unwrap(), &y);
            assert!(loss <= prev + 1e-12, "{rounds}: {loss} > {prev}");
            prev = loss;
        }
        if learning_rate == 0.1 {
            assert!(prev < 0.1, "{prev}");
        }
    }
}

#[test]
fn stumps_have_depth_one() {
    let (x, y) = blobs(90, 3, 1.5, 5);
    let m = train_gbt_stumps(&x, &y, &BoostParams { n_estimators: 30, ..Default::default() }, 1).unwrap();
    assert_eq!(m.stumps.len(), 30);
    assert!(m.stumps.iter().all(|s| s.feature < 3 && s.left.is_finite() && s.right.is_finite()));
}

/// Plain gradient descent with step 1/L on the same objective.
fn gd_oracle(x: &Array2<f64>, y: &[u8], c: f64) -> (Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let lip = (x.iter().map(|v| v * v).sum::<f64>() + n) / (4.0 * n) + 1.0 / c;
    let mut w = ndarray::Array1::zeros(x.ncols());
    let mut b = 0.0;
    for _ in 0..2_000_000 {
        let g = logistic_gradient(x, y, &w, b, c);
        if g.dot(&g).sqrt() < 1e-10 {
            break;
        }
        let d = x.ncols();
        w = &w - &(g.slice(ndarray::s![..d]).to_owned() / lip);
        b -= g[d] / lip;
    }
    (w.to_vec(), b)
}

#[test]
fn logistic_matches_gradient_descent_oracle() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((20, 3), |_| rng.random_range(-2.0..2.0));
        let y: Vec<u8> = (0..20).map(|i| ((x[[i, 0]] - 0.5 * x[[i, 1]] + rng.random_range(-1.0..1.0)) > 0.0) as u8).collect();
        let m = train_logistic_regression(&x, &y, &LogisticParams::default()).unwrap();
        assert!(m.converged && m.gradient_norm < 1e-8);
        let (w, b) = gd_oracle(&x, &y, 100.0);
        for (a, o) in m.weights.iter().zip(&w) {
            assert!((a - o).abs() < 1e-4, "{a} vs {o}");
        }
        assert!((m.bias - b).abs() < 1e-4);
    }
}

fn small_config() -> EnsembleConfig {
    EnsembleConfig {
        forest: ForestParams { n_estimators: 20, ..Default::default() },
        boost: BoostParams { n_estimators: 60, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn single_member_weights_reproduce_the_member() {
    let (x, y) = blobs(90, 4, 1.0, 3);
    let cfg = EnsembleConfig { weights: [1.0, 0.0, 0.0], ..small_config() };
    let m = ensemble_fit(&x, &y, &cfg, 7).unwrap();
    let forest = train_random_forest(&x, &y, &cfg.forest, 7).unwrap();
    let (a, b) = (m.predict_proba(&x).unwrap(), forest.predict_proba(&x).unwrap());
    assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-15));
}

#[test]
fn identical_members_pass_through() {
    let p = [0.27, 0.73];
    let v = soft_vote(&[p, p, p], &[0.2, 0.5, 0.3]);
    assert!((v[0] - p[0]).abs() < 1e-15 && (v[1] - p[1]).abs() < 1e-15);
}

#[test]
fn ensemble_average_of_members() {
    let (x, y) = blobs(60, 3, 1.0, 8);
    let m = ensemble_fit(&x, &y, &small_config(), 2).unwrap();
    let members = m.member_proba(&x).unwrap();
    let p = m.predict_proba(&x.slice(ndarray::s![..1, ..]).to_owned()).unwrap();
    let want = (members[0][[0, 1]] + members[1][[0, 1]] + members[2][[0, 1]]) / 3.0;
    assert!((p[[0, 1]] - want).abs() < 1e-12);
    assert!(matches!(m.predict_proba(&Array2::zeros((1, 5))), Err(EnsembleError::Dimension { .. })));
}

#[test]
fn stacked_mode_trains_and_separates() {
    let (x, y) = blobs(120, 4, 3.0, 4);
    let cfg = EnsembleConfig { mode: VoteMode::Stacked, ..small_config() };
    let m = ensemble_fit(&x, &y, &cfg, 1).unwrap();
    assert_eq!(m.logistic.n_features(), 2);
    let pred = m.predict(&x).unwrap();
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    assert!(acc > 0.95, "{acc}");
}

#[test]
fn model_document_round_trip() {
    let (x, y) = blobs(60, 3, 1.0, 8);
    let m = ensemble_fit(&x, &y, &small_config(), 2).unwrap();
    let json = m.to_json();
    let back = EnsembleModel::from_json(&json).unwrap();
    assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
    let bumped = json.replacen("\"schema_version\":1", "\"schema_version\":2", 1);
    assert!(EnsembleModel::from_json(&bumped).is_err());
}

#[test]
fn stratified_fold_sizes() {
    let y: Vec<u8> = (0..103).map(|i| (i % 4 == 0) as u8).collect();
    let folds = stratified_folds(&y, 10, 3).unwrap();
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    let ones: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i] == 1).count()).collect();
    assert!(ones.iter().max().unwrap() - ones.iter().min().unwrap() <= 1);
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, (0..103).collect::<Vec<_>>());
    assert_eq!(folds, stratified_folds(&y, 10, 3).unwrap());
}

#[test]
fn grid_of_one_cell_returns_it() {
    let (x, y) = blobs(60, 3, 2.0, 1);
    let grid: ParamGrid = [("forest.n_estimators".to_string(), vec![json!(5)])].into();
    let r = grid_search_cv(&x, &y, &small_config(), &grid, 3, 0).unwrap();
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.best_config.forest.n_estimators, 5);
    let mean = r.cells[0].fold_accuracy.iter().sum::<f64>() / 3.0;
    assert!((r.cells[0].mean_accuracy - mean).abs() < 1e-15);
}

#[test]
fn dominated_cell_loses() {
    let (x, y) = blobs(60, 2, 4.0, 6);
    let base = EnsembleConfig { weights: [1.0, 0.0, 0.0], ..small_config() };
    let grid: ParamGrid = [("forest.n_estimators".to_string(), vec![json!(0), json!(10)])].into();
    let r = grid_search_cv(&x, &y, &base, &grid, 5, 2).unwrap();
    let expected: BTreeMap<String, serde_json::Value> = [("forest.n_estimators".to_string(), json!(10))].into();
    assert_eq!(r.best_params, expected);
    assert!(r.cells[1].mean_accuracy > r.cells[0].mean_accuracy);
}

#[test]
fn default_config_snapshot() {
    let doc = serde_json::to_value(EnsembleConfig::default()).unwrap();
    assert_eq!(
        doc,
        table_config_json()
    );
}
