mod common;

use common::{penalty_oracle, tiny_critic, bimodal_2d};
use ndarray::Array2;
use ntl_core::augmentation::{
    fit_vgm, gradient_penalty, msn_decode, msn_encode, sample_synthetic, train_wgan_gp, ClassRatio, ColumnModes, GanConfig, MsnTransformer,
    MsnValue,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn bimodal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Normal::new(0.0, 0.1).unwrap();
    let b = Normal::new(10.0, 0.1).unwrap();
    (0..n)
        .map(|_| if rng.random::<bool>() { a.sample(&mut rng) } else { b.sample(&mut rng) })
        .collect()
}

#[test]
fn vgm_recovers_two_modes() {
    let m = fit_vgm(&bimodal(500, 4), 10).unwrap();
    assert_eq!(m.n_modes(), 2, "{m:?}");
    let mut means = m.means.clone();
    means.sort_by(f64::total_cmp);
    assert!((means[0] - 0.0).abs() < 0.5 && (means[1] - 10.0).abs() < 0.5, "{means:?}");
}

#[test]
fn vgm_single_cluster_weights_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let values: Vec<f64> = (0..300).map(|_| rng.random_range(2.0..3.0)).collect();
    let m = fit_vgm(&values, 10).unwrap();
    assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(m.weights.iter().all(|&w| w >= 0.01));
    assert!(m.stds.iter().all(|&s| s > 0.0));
}

#[test]
fn decode_of_random_encodings_is_finite_and_nonnegative() {
    let m = fit_vgm(&bimodal(200, 1), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let v = MsnValue { alpha: rng.random_range(-1.0..=1.0), mode: rng.random_range(0..m.n_modes()) };
        let x = msn_decode(v, &m, true).unwrap();
        assert!(x.is_finite() && x >= 0.0);
    }
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let critic = tiny_critic(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Array2::from_shape_simple_fn((7, 4), || rng.random_range(-1.0..1.0));
        let (value, grads) = gradient_penalty(&critic, &x, 10.0).unwrap();
        assert!((value - penalty_oracle(&critic, &x, 10.0)).abs() < 1e-12);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (t, g) in grads.iter().enumerate() {
            for (i, &analytic) in g.iter().enumerate() {
                let mut plus = critic.clone();
                plus.params_mut()[t][i] += h;
                let mut minus = critic.clone();
                minus.params_mut()[t][i] -= h;
                let numeric = (penalty_oracle(&plus, &x, 10.0) - penalty_oracle(&minus, &x, 10.0)) / (2.0 * h);
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8));
            }
        }
        assert!(worst < 1e-3, "seed {seed}: {worst}");
    }
}

#[test]
fn gan_covers_both_modes() {
    let data = bimodal_2d(1000, 3);
    let labels = vec![0u8; 1000];
    let config = GanConfig { epochs: 200, batch_size: 100, seed: 5, ..Default::default() };
    let (model, history) = train_wgan_gp(&data, &labels, &config).unwrap();
    assert_eq!(history.generator_loss.len(), 2000);
    let samples = model.generate(&vec![0u8; 2000], 9).unwrap();
    let near_low = samples.rows().into_iter().filter(|r| (r[0] - 2.0).hypot(r[1] - 2.0) < (r[0] - 8.0).hypot(r[1] - 8.0)).count();
    let frac = near_low as f64 / 2000.0;
    eprintln!("low-mode share {frac}");
    assert!((0.2..=0.8).contains(&frac), "{frac}");
}

#[test]
fn synthetic_counts_and_ranges() {
    let data = bimodal_2d(200, 1);
    let labels: Vec<u8> = (0..200).map(|i| (i % 3 == 0) as u8).collect();
    let config = GanConfig { epochs: 2, batch_size: 50, pac: 2, seed: 1, ..Default::default() };
    let (model, _) = train_wgan_gp(&data, &labels, &config).unwrap();
    let (rows, y) = sample_synthetic(&model, 3001, ClassRatio::default(), 4).unwrap();
    assert_eq!(y.iter().filter(|&&l| l == 1).count(), 1000);
    assert_eq!(rows.nrows(), 3001);
    for (c, col) in rows.columns().into_iter().enumerate() {
        let m = &model.transformer.columns[c];
        let lo = (0..m.n_modes()).map(|k| m.means[k] - 4.0 * m.stds[k]).fold(f64::INFINITY, f64::min);
        let hi = (0..m.n_modes()).map(|k| m.means[k] + 4.0 * m.stds[k]).fold(f64::NEG_INFINITY, f64::max);
        assert!(col.iter().all(|&v| v.is_finite() && v >= 0.0 && v >= lo.min(0.0) - 1e-9 && v <= hi + 1e-9));
    }
    let again = sample_synthetic(&model, 3001, ClassRatio::default(), 4).unwrap();
    assert_eq!(again.0, rows);
}

#[test]
fn pac_mismatch_rejected() {
    let data = bimodal_2d(100, 1);
    let config = GanConfig { batch_size: 50, pac: 3, ..Default::default() };
    assert!(train_wgan_gp(&data, &vec![0; 100], &config).is_err());
}

#[test]
fn transformer_round_trip_on_matrix() {
    let data = bimodal_2d(300, 7);
    let t = MsnTransformer::fit(&data, 10, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = t.encode(&data, &mut rng).unwrap();
    let dec = t.decode(&enc).unwrap();
    for (i, (a, b)) in dec.iter().zip(data.iter()).enumerate() {
        let alpha_col = if i % 2 == 0 { 0 } else { t.layout()[1].0 };
        if enc[[i / 2, alpha_col]].abs() < 1.0 {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn encode_decode_identity(x in -50.0f64..50.0, seed in 0u64..1000) {
        let m = ColumnModes { means: vec![-10.0, 3.0, 20.0], stds: vec![5.0, 4.0, 8.0], weights: vec![0.3, 0.3, 0.4] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = msn_encode(x, &m, &mut rng);
        prop_assert!((-1.0..=1.0).contains(&v.alpha));
        if v.alpha.abs() < 1.0 {
            prop_assert!((msn_decode(v, &m, false).unwrap() - x).abs() < 1e-9);
        }
    }

    #[test]
    fn split_follows_floor_rule(n in 0usize..100_000, g in 1u32..5, t in 1u32..5) {
        let (genuine, theft) = ClassRatio { genuine: g, theft: t }.split(n);
        prop_assert_eq!(genuine + theft, n);
        prop_assert_eq!(theft, n * t as usize / (g + t) as usize);
    }
}
