//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use ndarray::{Array1, Array2, Axis};
use ntl_core::data::{daily_dates, Gap, MinMaxScaler};
use ntl_core::imputation::{impute_gap, ImputeConfig};
use ntl_core::nn::{BatchNorm, Dense, Layer, NeuralNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

/// Rows are consumers over 64 days: a personal base load plus a yearly-style
/// swing and a weekend bump of personal amplitude, with small noise.
/// Scaled column-wise to [0, 1].
pub fn seasonal_fixture(rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.003).unwrap();
    let cols = 64;
    let mut x = Array2::zeros((rows, cols));
    for i in 0..rows {
        let base = rng.random_range(1.0..2.0);
        let season = rng.random_range(0.0..0.6);
        let week = rng.random_range(0.0..0.4);
        for j in 0..cols {
            let s = (2.0 * std::f64::consts::PI * j as f64 / cols as f64).cos();
            let w = if j % 7 >= 5 { 1.0 } else { 0.0 };
            x[[i, j]] = base + season * s + week * w + noise.sample(&mut rng);
        }
    }
    MinMaxScaler::fit(&x).transform(&x)
}

/// Points on a 2-dim linear manifold inside [0, 1]^8.
pub fn manifold_fixture(rows: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Orthogonal directions of equal length, so input distances are isotropic
    // in the manifold coordinates.
    let a = Array1::from(vec![0.2, 0.2, 0.2, 0.2, -0.2, -0.2, -0.2, -0.2]);
    let b = Array1::from(vec![0.2, -0.2, 0.2, -0.2, 0.2, -0.2, 0.2, -0.2]);
    let mut x = Array2::zeros((rows, 8));
    for mut row in x.axis_iter_mut(Axis(0)) {
        let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        row.assign(&(&a * u + &b * v + 0.5));
    }
    x
}

/// Minimum summed local cost over every warping path, by recursion over all
/// monotone paths from `(0, 0)` to the last cell.
pub fn exhaustive_dtw(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).powi(2);
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Derivative estimate written out from its definition.
pub fn derivative_oracle(x: &[f64]) -> Vec<f64> {
    (1..x.len() - 1).map(|i| ((x[i] - x[i - 1]) + (x[i + 1] - x[i - 1]) / 2.0) / 2.0).collect()
}

/// Every sequence of length `1..=max_len` over `alphabet`.
pub fn all_sequences(alphabet: &[f64], max_len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s| alphabet.iter().map(move |&c| [s.as_slice(), &[c]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// A year of daily readings with a strong weekly shape, a slow seasonal swing
/// and small noise.
pub fn weekly_series(days: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let shape: Vec<f64> = (0..7).map(|_| rng.random_range(0.5..2.0)).collect();
    let phase = rng.random_range(0.0..365.0);
    (0..days)
        .map(|d| {
            let season = 1.0 + 0.2 * (2.0 * std::f64::consts::PI * (d as f64 - phase) / 365.0).cos();
            (shape[d % 7] * season + noise.sample(&mut rng)).max(0.0)
        })
        .collect()
}

/// Row indices kept by Near-Miss version 1, computed from a full distance
/// table: majority rows ranked by mean distance to their `k` nearest minority
/// rows (ties to the lower index), plus every minority row.
pub fn near_miss_oracle(x: &Array2<f64>, labels: &[u8], k: usize) -> Vec<usize> {
    let ones: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let zeros: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let (major, minor) = if ones.len() > zeros.len() { (ones, zeros) } else { (zeros, ones) };
    let n = x.nrows();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    }
    let mut scored: Vec<(f64, usize)> = major
        .iter()
        .map(|&i| {
            let mut d: Vec<f64> = minor.iter().map(|&j| dist[i][j]).collect();
            d.sort_by(f64::total_cmp);
            (d[..k].iter().sum::<f64>() / k as f64, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = scored[..minor.len()].iter().map(|&(_, i)| i).chain(minor.iter().copied()).collect();
    keep.sort_unstable();
    keep
}

fn linear(truth: &[f64], s: usize, len: usize) -> Vec<f64> {
    let (a, b) = (truth[s - 1], truth[s + len]);
    (1..=len).map(|k| a + (b - a) * k as f64 / (len + 1) as f64).collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Mean per-gap RMSE of the seasonal fill and of linear interpolation over
/// masked runs of length 5 to 20.
pub fn gap_errors(series: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = daily_dates("2014-01-01".parse().unwrap(), 730);
    let config = ImputeConfig::default();
    let (mut ours, mut lin, mut n) = (0.0, 0.0, 0.0);
    for k in 0..series {
        let truth = weekly_series(730, seed * 1000 + k as u64);
        for _ in 0..4 {
            let len = rng.random_range(5..=20);
            let s = rng.random_range(30..730 - 30 - len);
            let row: Vec<Option<f64>> =
                truth.iter().enumerate().map(|(i, &v)| if (s..s + len).contains(&i) { None } else { Some(v) }).collect();
            let (fill, _) = impute_gap(&row, &dates, &Gap { row: 0, start: s, len }, &config);
            ours += rmse(&fill, &truth[s..s + len]);
            lin += rmse(&linear(&truth, s, len), &truth[s..s + len]);
            n += 1.0;
        }
    }
    (ours / n, lin / n)
}

pub fn random_net(seed: u64, dims: &[usize], batchnorm: bool, head: Layer) -> NeuralNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for w in dims.windows(2).take(dims.len() - 2) {
        layers.push(Layer::Dense(Dense::glorot(w[0], w[1], &mut rng)));
        layers.push(Layer::Relu);
        if batchnorm {
            let mut bn = BatchNorm::new(w[1]);
            bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
            bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            layers.push(Layer::BatchNorm(bn));
        }
    }
    let n = dims.len();
    let mut last = Dense::glorot(dims[n - 2], dims[n - 1], &mut rng);
    last.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    layers.push(Layer::Dense(last));
    if head != Layer::Relu {
        layers.push(head);
    }
    NeuralNet::new(layers).unwrap()
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// (concordant + ties / 2) / (pos * neg) over every positive-negative pair.
pub fn pair_auc(y: &[u8], s: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

pub fn random_case(rng: &mut ChaCha8Rng, max_n: usize, levels: u32) -> (Vec<u8>, Vec<f64>) {
    loop {
        let n = rng.random_range(2..=max_n);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if y.contains(&0) && y.contains(&1) {
            let s = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            return (y, s);
        }
    }
}

/// Penalty recomputed through the generic network backward pass, independent
/// of the closed form used in training.
pub fn penalty_oracle(critic: &NeuralNet, x: &Array2<f64>, lambda: f64) -> f64 {
    let mut net = critic.clone();
    let out = net.forward(x).unwrap();
    let (_, dx) = net.backward(&Array2::ones(out.dim())).unwrap();
    let n = x.nrows() as f64;
    dx.rows().into_iter().map(|r| (r.dot(&r).sqrt() - 1.0).powi(2)).sum::<f64>() * lambda / n
}

pub fn tiny_critic(seed: u64) -> NeuralNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NeuralNet::new(vec![
        Layer::Dense(Dense::glorot(4, 6, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::glorot(6, 5, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::glorot(5, 1, &mut rng)),
    ])
    .unwrap()
}

pub fn bimodal_2d(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut x = Array2::zeros((n, 2));
    for mut row in x.rows_mut() {
        let c = if rng.random::<bool>() { 2.0 } else { 8.0 };
        row[0] = c + noise.sample(&mut rng);
        row[1] = c + noise.sample(&mut rng);
    }
    x
}

/// Random instance with at most 30 rows and 4 dims and both classes present.
pub fn nearmiss_instance(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<u8>) {
    let n = rng.random_range(4..=30);
    let d = rng.random_range(1..=4);
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    let minority = rng.random_range(1..=n / 2);
    let mut labels = vec![0u8; n];
    for i in rand::seq::index::sample(rng, n, minority) {
        labels[i] = 1;
    }
    (x, labels)
}

/// Ensemble hyperparameters as a JSON document.
pub fn table_config_json() -> serde_json::Value {
    json!({
        "mode": "soft-vote",
        "forest": {
            "n_estimators": 300,
            "max_features": "sqrt",
            "criterion": "gini",
            "min_samples_leaf": 5,
            "class_weight": "balanced",
            "max_depth": null,
            "bootstrap": true
        },
        "boost": {
            "objective": "binary:logistic",
            "learning_rate": 0.03,
            "n_estimators": 500,
            "max_depth": 1,
            "subsample": 0.4,
            "reg_lambda": 1.0,
            "min_child_weight": 1.0
        },
        "logistic": { "penalty": "l2", "C": 100.0, "tol": 1e-8, "max_iter": 100 },
        "weights": [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        "stack_folds": 5
    })
}
