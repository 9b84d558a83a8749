mod common;

use chrono::NaiveDate;
use common::{all_sequences, derivative_oracle, exhaustive_dtw, gap_errors, weekly_series};
use ntl_core::data::{daily_dates, ConsumptionMatrix, Gap};
use ntl_core::imputation::{derivative_transform, dtw_cost, impute_gap, impute_matrix, DtwCostMatrix, FillMethod, ImputeConfig, LocalCost};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn start() -> NaiveDate {
    "2014-01-01".parse().unwrap()
}

#[test]
fn dtw_matches_exhaustive_paths() {
    let seqs = all_sequences(&[0.0, 1.0, 2.0], 5);
    for a in &seqs {
        for b in &seqs {
            let want = exhaustive_dtw(a, b);
            assert_eq!(dtw_cost(a, b, LocalCost::SquaredDifference).unwrap(), want, "{a:?} {b:?}");
            if a.len() >= 3 && b.len() >= 3 {
                let want = exhaustive_dtw(&derivative_oracle(a), &derivative_oracle(b));
                let got = dtw_cost(a, b, LocalCost::Derivative).unwrap();
                assert!((got - want).abs() < 1e-12, "{a:?} {b:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn warping_path_cost_equals_distance() {
    let seqs = all_sequences(&[0.0, 1.0, 2.0], 4);
    for a in &seqs {
        for b in &seqs {
            let grid = DtwCostMatrix::build(a, b, LocalCost::SquaredDifference).unwrap();
            let path = grid.warping_path();
            assert_eq!(path[0], (0, 0));
            assert_eq!(*path.last().unwrap(), (a.len() - 1, b.len() - 1));
            let sum: f64 = path.iter().map(|&(i, j)| (a[i] - b[j]).powi(2)).sum();
            assert_eq!(sum, grid.distance());
        }
    }
}

proptest! {
    #[test]
    fn dtw_is_symmetric_and_bounded_by_lockstep(a in prop::collection::vec(-5.0f64..5.0, 3..20)) {
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let ab = dtw_cost(&a, &b, LocalCost::SquaredDifference).unwrap();
        let ba = dtw_cost(&b, &a, LocalCost::SquaredDifference).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        let lockstep: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(ab <= lockstep + 1e-9);
        prop_assert_eq!(dtw_cost(&a, &a, LocalCost::Derivative).unwrap(), 0.0);
        prop_assert_eq!(derivative_transform(&a).unwrap(), derivative_oracle(&a));
    }
}

#[test]
fn seasonal_fill_beats_linear_interpolation() {
    let (ours, lin) = gap_errors(50, 1);
    eprintln!("mean gap rmse: seasonal {ours:.4}, linear {lin:.4}");
    assert!(ours < 0.5 * lin, "{ours} vs {lin}");
}

#[test]
fn exact_motifs_are_recovered() {
    let dates = daily_dates(start(), 400);
    for (period, s, len) in [(7, 100, 5), (9, 200, 12), (13, 250, 20), (5, 330, 8)] {
        let truth: Vec<f64> = (0..400).map(|i| 1.0 + ((i % period) as f64 * 0.9).sin().abs() + (i % period) as f64 * 0.05).collect();
        let row: Vec<Option<f64>> = truth.iter().enumerate().map(|(i, &v)| if (s..s + len).contains(&i) { None } else { Some(v) }).collect();
        let (fill, method) = impute_gap(&row, &dates, &Gap { row: 0, start: s, len }, &ImputeConfig::default());
        assert_eq!(method, FillMethod::Edtwbi);
        for (f, t) in fill.iter().zip(&truth[s..s + len]) {
            assert!((f - t).abs() < 1e-9, "period {period}: {f} vs {t}");
        }
    }
}

#[test]
fn matrix_imputation_keeps_observed_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = 6;
    let mut cells = Vec::new();
    for r in 0..rows {
        for v in weekly_series(365, r as u64) {
            cells.push(if rng.random::<f64>() < 0.1 { None } else { Some(v) });
        }
    }
    let ids = (0..rows).map(|i| format!("c{i}")).collect();
    let m = ConsumptionMatrix::new(ids, vec![0; rows], daily_dates(start(), 365), cells).unwrap();
    let (filled, summary) = impute_matrix(&m, &ImputeConfig::default()).unwrap();
    assert!(filled.is_complete());
    assert_eq!(summary.cells_filled, m.missing_count());
    assert_eq!(summary.fallback_counts.values().sum::<usize>(), summary.gaps_filled);
    for (a, b) in m.cells().iter().zip(filled.cells()) {
        if let Some(v) = a {
            assert_eq!(Some(*v), *b);
        }
        assert!(b.unwrap() >= 0.0);
    }
}
