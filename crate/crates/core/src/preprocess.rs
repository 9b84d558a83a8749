//! Z-score outlier removal and Near-Miss (version 1) undersampling.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ConsumptionMatrix;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("empty input")]
    Empty,
    #[error("matrix contains missing cells")]
    MissingPresent,
    #[error("only one class present")]
    SingleClass,
    #[error("k = {k} exceeds the minority class size {minority}")]
    KTooLarge { k: usize, minority: usize },
    #[error("target of {target} per class exceeds the minority class size {minority}")]
    TargetTooLarge { target: usize, minority: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("recorded statistics do not match the input: {0}")]
    StatsMismatch(String),
}

/// Which values share a mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZAxis {
    /// One (mean, std) per day column.
    #[default]
    Column,
    /// One (mean, std) per consumer row.
    Row,
    /// A single (mean, std) for the whole matrix.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreReport {
    pub axis: ZAxis,
    pub threshold: f64,
    /// Population statistics, one entry per column, per row or a single entry.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub dropped_rows: Vec<usize>,
    pub kept_rows: Vec<usize>,
}

fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn z(v: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (v - mean) / std
    } else {
        0.0
    }
}

fn compute_stats(data: &Array2<f64>, axis: ZAxis) -> (Vec<f64>, Vec<f64>) {
    let pairs: Vec<(f64, f64)> = match axis {
        ZAxis::Column => data.axis_iter(Axis(1)).map(|c| population_stats(c.into_iter().copied())).collect(),
        ZAxis::Row => data.axis_iter(Axis(0)).map(|r| population_stats(r.into_iter().copied())).collect(),
        ZAxis::Global => vec![population_stats(data.iter().copied())],
    };
    pairs.into_iter().unzip()
}

fn max_abs_z(row: ArrayView1<'_, f64>, row_idx: usize, axis: ZAxis, means: &[f64], stds: &[f64]) -> f64 {
    row.iter()
        .enumerate()
        .map(|(j, &v)| {
            let s = match axis {
                ZAxis::Column => j,
                ZAxis::Row => row_idx,
                ZAxis::Global => 0,
            };
            z(v, means[s], stds[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Drops every row holding at least one cell with `|Z| > threshold`.
pub fn zscore_filter(
    m: &ConsumptionMatrix,
    threshold: f64,
    axis: ZAxis,
) -> Result<(ConsumptionMatrix, ZScoreReport), PreprocessError> {
    if m.n_rows() == 0 || m.n_cols() == 0 {
        return Err(PreprocessError::Empty);
    }
    let data = m.to_dense().map_err(|_| PreprocessError::MissingPresent)?;
    let (means, stds) = compute_stats(&data, axis);
    let report = partition(&data, axis, threshold, means, stds);
    Ok((m.select_rows(&report.kept_rows), report))
}

/// Re-applies recorded column or global statistics to another matrix.
pub fn zscore_apply(m: &ConsumptionMatrix, stats: &ZScoreReport) -> Result<(ConsumptionMatrix, ZScoreReport), PreprocessError> {
    let data = m.to_dense().map_err(|_| PreprocessError::MissingPresent)?;
    match stats.axis {
        ZAxis::Column if stats.means.len() != data.ncols() => {
            return Err(PreprocessError::StatsMismatch(format!(
                "{} column statistics for {} columns",
                stats.means.len(),
                data.ncols()
            )))
        }
        ZAxis::Row if stats.means.len() != data.nrows() => {
            return Err(PreprocessError::StatsMismatch("row statistics are per input row".into()))
        }
        _ => {}
    }
    let report = partition(&data, stats.axis, stats.threshold, stats.means.clone(), stats.stds.clone());
    Ok((m.select_rows(&report.kept_rows), report))
}

fn partition(data: &Array2<f64>, axis: ZAxis, threshold: f64, means: Vec<f64>, stds: Vec<f64>) -> ZScoreReport {
    let (mut kept_rows, mut dropped_rows) = (Vec::new(), Vec::new());
    for (i, row) in data.outer_iter().enumerate() {
        if max_abs_z(row, i, axis, &means, &stds) > threshold {
            dropped_rows.push(i);
        } else {
            kept_rows.push(i);
        }
    }
    ZScoreReport {
        axis,
        threshold,
        means,
        stds,
        dropped_rows,
        kept_rows,
    }
}

/// Balanced output of Near-Miss.
#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    /// Input row of every output row, ascending.
    pub indices: Vec<usize>,
}

fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean distance from each majority row to its `k` nearest minority rows.
pub fn near_miss_scores(features: &Array2<f64>, majority: &[usize], minority: &[usize], k: usize) -> Vec<f64> {
    let score = |&i: &usize| {
        let mut d: Vec<f64> = minority.iter().map(|&j| euclidean(features.row(i), features.row(j))).collect();
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
        d[..k].iter().sum::<f64>() / k as f64
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        majority.par_iter().map(score).collect()
    }
    #[cfg(not(feature = "parallel"))]
    majority.iter().map(score).collect()
}

/// Near-Miss version 1.
///
/// Keeps the `target_per_class` majority rows with the smallest mean distance
/// to their `k` nearest minority rows (ties to the lower row index) and
/// `target_per_class` minority rows (all of them, or a seeded uniform subset).
pub fn near_miss_undersample(
    features: &Array2<f64>,
    labels: &[u8],
    k: usize,
    target_per_class: usize,
    seed: u64,
) -> Result<Balanced, PreprocessError> {
    if features.nrows() != labels.len() {
        return Err(PreprocessError::LengthMismatch {
            features: features.nrows(),
            labels: labels.len(),
        });
    }
    let ones: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let zeros: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    if ones.is_empty() || zeros.is_empty() {
        return Err(PreprocessError::SingleClass);
    }
    // Class 0 is the majority on ties.
    let (majority, minority) = if ones.len() > zeros.len() { (ones, zeros) } else { (zeros, ones) };
    if k == 0 || k > minority.len() {
        return Err(PreprocessError::KTooLarge { k, minority: minority.len() });
    }
    if target_per_class > minority.len() {
        return Err(PreprocessError::TargetTooLarge {
            target: target_per_class,
            minority: minority.len(),
        });
    }

    let scores = near_miss_scores(features, &majority, &minority, k);
    let mut order: Vec<usize> = (0..majority.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(majority[a].cmp(&majority[b])));
    let mut keep: Vec<usize> = order[..target_per_class].iter().map(|&o| majority[o]).collect();

    if target_per_class == minority.len() {
        keep.extend_from_slice(&minority);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        keep.extend(sample(&mut rng, minority.len(), target_per_class).into_iter().map(|o| minority[o]));
    }
    keep.sort_unstable();
    Ok(Balanced {
        features: features.select(Axis(0), &keep),
        labels: keep.iter().map(|&i| labels[i]).collect(),
        indices: keep,
    })
}
