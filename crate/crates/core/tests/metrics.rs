mod common;

use common::{pair_auc, random_case};
use ntl_core::metrics::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Average precision by scanning every distinct threshold from the top.
fn sweep_pr(y: &[u8], s: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = y.iter().filter(|&&l| l == 1).count() as f64;
    let (mut area, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let tp = (0..y.len()).filter(|&i| s[i] >= t && y[i] == 1).count() as f64;
        let all = (0..y.len()).filter(|&i| s[i] >= t).count() as f64;
        area += (tp / pos - prev) * (tp / all);
        prev = tp / pos;
    }
    area
}

#[test]
fn confusion_matches_counting_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let t: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let c = confusion(&t, &p).unwrap();
        let count = |a, b| t.iter().zip(&p).filter(|&(&x, &y)| x == a && y == b).count() as u64;
        assert_eq!(c, ConfusionCounts { tp: count(1, 1), fp: count(0, 1), tn: count(0, 0), fn_: count(1, 0) });
        assert_eq!(c.total(), 50);
    }
}

#[test]
fn hand_computed_scores() {
    let r = prf1(&ConfusionCounts { tp: 5, fp: 0, tn: 3, fn_: 0 });
    assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    let r = prf1(&ConfusionCounts { tp: 5, fp: 2, tn: 0, fn_: 1 });
    assert!((r.precision - 5.0 / 7.0).abs() < 1e-15);
    assert!((r.recall - 5.0 / 6.0).abs() < 1e-15);
    assert!((r.f1 - 10.0 / 13.0).abs() < 1e-15);
    let (m, degenerate) = mcc(&ConfusionCounts { tp: 5, fp: 2, tn: 8, fn_: 1 });
    assert!(!degenerate);
    assert!((m - 38.0 / 3780f64.sqrt()).abs() < 1e-12);
    assert!((m - 0.6180).abs() < 1e-4);
}

#[test]
fn roc_matches_pair_counting_on_small_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let (y, s) = random_case(&mut rng, 12, 5);
        let (auc, curve) = roc_auc(&y, &s).unwrap();
        assert!((auc - pair_auc(&y, &s)).abs() < 1e-12, "{y:?} {s:?}");
        assert!(curve.points.windows(2).all(|w| w[1].threshold < w[0].threshold));
        assert!(curve.points.windows(2).all(|w| w[1].x >= w[0].x && w[1].y >= w[0].y));
        let last = curve.points.last().unwrap();
        assert_eq!((last.x, last.y), (1.0, 1.0));
    }
}

#[test]
fn six_sample_cases() {
    let y = [1, 0, 1, 1, 0, 0];
    let s = [0.9, 0.8, 0.8, 0.4, 0.3, 0.4];
    assert!((roc_auc(&y, &s).unwrap().0 - pair_auc(&y, &s)).abs() < 1e-12);
    assert!((pr_auc(&y, &s).unwrap().0 - sweep_pr(&y, &s)).abs() < 1e-12);
    assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.7, 0.8]).unwrap().0, 1.0);
    assert_eq!(pr_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.7, 0.8]).unwrap().0, 1.0);
}

#[test]
fn pr_matches_threshold_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..300 {
        let (y, s) = random_case(&mut rng, 12, 4);
        assert!((pr_auc(&y, &s).unwrap().0 - sweep_pr(&y, &s)).abs() < 1e-12);
    }
}

#[test]
fn curve_csv_reintegrates_to_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<u8> = (0..500).map(|i| (i % 7 == 0) as u8).collect();
    let s: Vec<f64> = y.iter().map(|&l| l as f64 * 0.3 + rng.random::<f64>()).collect();
    let (auc, curve) = roc_auc(&y, &s).unwrap();
    let text = curve_csv(&curve);
    assert_eq!(text.lines().count() - 1, curve.points.len());
    let distinct = {
        let mut v = s.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    assert_eq!(curve.points.len(), distinct + 1);
    let back = parse_curve_csv(&text, CurveKind::Roc).unwrap();
    assert!((trapezoid(&back.points) - auc).abs() < 1e-9);
}

#[test]
fn report_carries_both_averages() {
    let y = [1, 0, 1, 0, 0, 1];
    let pred = [1, 0, 0, 0, 1, 1];
    let s = [0.9, 0.1, 0.4, 0.2, 0.6, 0.8];
    let r = metrics_report(&y, &pred, &s).unwrap();
    let neg = prf1(&r.confusion.swapped());
    assert!((r.macro_avg.recall - (r.recall + neg.recall) / 2.0).abs() < 1e-15);
    let json = serde_json::to_value(&r).unwrap();
    for key in ["precision", "recall", "f1", "fpr", "auc_roc", "pr_auc", "mcc", "confusion", "flags"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["confusion"]["fn"], 1);
}

proptest! {
    #[test]
    fn reversed_scores_complement(n in 2usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        let s: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&y, &s).unwrap().0 + roc_auc(&y, &neg).unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mcc_symmetric_under_class_swap(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
        let c = ConfusionCounts { tp, fp, tn, fn_ };
        let (a, da) = mcc(&c);
        let (b, db) = mcc(&c.swapped());
        prop_assert_eq!(da, db);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn paired_permutation_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, s) = random_case(&mut rng, 20, 6);
        let pred: Vec<u8> = s.iter().map(|&v| (v >= 0.5) as u8).collect();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut rng);
        let yp: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
        let sp: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        let pp: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
        prop_assert_eq!(metrics_report(&y, &pred, &s).unwrap(), metrics_report(&yp, &pp, &sp).unwrap());
    }
}
