mod common;

use common::{near_miss_oracle, nearmiss_instance};
use ndarray::Array2;
use ntl_core::data::{daily_dates, ConsumptionMatrix};
use ntl_core::preprocess::{near_miss_undersample, zscore_filter, ZAxis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn near_miss_matches_distance_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        let (x, labels) = nearmiss_instance(&mut rng);
        let minority = labels.iter().filter(|&&l| l == 1).count().min(labels.iter().filter(|&&l| l == 0).count());
        let k = rng.random_range(1..=minority.min(3));
        let out = near_miss_undersample(&x, &labels, k, minority, trial).unwrap();
        assert_eq!(out.indices, near_miss_oracle(&x, &labels, k), "trial {trial}");
        assert_eq!(out.labels.iter().filter(|&&l| l == 1).count(), minority);
        assert_eq!(out.labels.len(), 2 * minority);
    }
}

#[test]
fn any_target_size_is_exactly_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_simple_fn((400, 3), || rng.random_range(0.0..1.0));
    let labels: Vec<u8> = (0..400).map(|i| (i % 8 == 0) as u8).collect();
    for target in [1, 10, 37, 50] {
        let out = near_miss_undersample(&x, &labels, 3, target, 9).unwrap();
        let ones = out.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!((ones, out.labels.len() - ones), (target, target));
        assert!(out.indices.windows(2).all(|w| w[0] < w[1]));
        for (r, &i) in out.indices.iter().enumerate() {
            assert_eq!(out.features.row(r), x.row(i));
        }
    }
    assert!(near_miss_undersample(&x, &labels, 3, 51, 9).is_err());
}

fn matrix(x: &Array2<f64>) -> ConsumptionMatrix {
    let ids = (0..x.nrows()).map(|i| format!("c{i}")).collect();
    ConsumptionMatrix::from_dense(ids, vec![0; x.nrows()], daily_dates("2014-01-01".parse().unwrap(), x.ncols()), x).unwrap()
}

proptest! {
    #[test]
    fn zscore_partition_follows_column_statistics(seed in any::<u64>(), rows in 2usize..40, cols in 1usize..8, threshold in 0.5f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..10.0));
        let (kept, report) = zscore_filter(&matrix(&x), threshold, ZAxis::Column).unwrap();
        let mut both = report.kept_rows.clone();
        both.extend(&report.dropped_rows);
        both.sort_unstable();
        prop_assert_eq!(both, (0..rows).collect::<Vec<_>>());
        prop_assert_eq!(kept.n_rows(), report.kept_rows.len());
        for j in 0..cols {
            let col: Vec<f64> = x.column(j).to_vec();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64).sqrt();
            prop_assert!((report.means[j] - mean).abs() < 1e-9 && (report.stds[j] - std).abs() < 1e-9);
        }
        let max_z = |i: usize| (0..cols).map(|j| if report.stds[j] > 0.0 { ((x[[i, j]] - report.means[j]) / report.stds[j]).abs() } else { 0.0 }).fold(0.0, f64::max);
        for &i in &report.dropped_rows {
            prop_assert!(max_z(i) > threshold);
        }
        for &i in &report.kept_rows {
            prop_assert!(max_z(i) <= threshold);
        }
    }
}
