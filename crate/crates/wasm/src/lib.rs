//! Browser bindings: gap imputation on a generated consumer, ROC/PR curves
//! for adjustable score distributions, and genuine vs theft profiles.
//! Every function returns a JSON string.

use ntl_core::imputation::{impute_row, ImputeConfig};
use ntl_core::metrics::metrics_report;
use ntl_core::pipeline::{generate_synthetic_dataset, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn consumers(seed: u64, n: usize, theft_fraction: f64) -> Result<(ntl_core::data::ConsumptionMatrix, ntl_core::pipeline::GroundTruth), JsValue> {
    let params = SynthParams { n_consumers: n, theft_fraction, missing_fraction: 0.0, seed, ..SynthParams::default() };
    generate_synthetic_dataset(&params).map_err(js_err)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Masks `gap_len` days of a generated genuine consumer starting at
/// `gap_start` and fills them by DTW matching and by a straight line.
#[wasm_bindgen]
pub fn impute_gap(seed: u64, gap_start: usize, gap_len: usize) -> Result<String, JsValue> {
    let (m, truth) = consumers(seed, 1, 0.0)?;
    let n = m.n_cols();
    if gap_len == 0 || gap_start == 0 || gap_start + gap_len >= n {
        return Err(js_err(format!("gap must lie strictly inside 1..{}", n - 1)));
    }
    let clean: Vec<f64> = truth.clean.row(0).to_vec();
    let masked: Vec<Option<f64>> = clean.iter().enumerate().map(|(i, &v)| if (gap_start..gap_start + gap_len).contains(&i) { None } else { Some(v) }).collect();
    let (filled, methods) = impute_row(&masked, m.dates(), &ImputeConfig::default());
    let (left, right) = (clean[gap_start - 1], clean[gap_start + gap_len]);
    let linear: Vec<f64> = (1..=gap_len).map(|k| left + (right - left) * k as f64 / (gap_len + 1) as f64).collect();
    let span = gap_start..gap_start + gap_len;
    Ok(json!({
        "truth": clean,
        "filled": filled,
        "linear": linear,
        "gap_start": gap_start,
        "gap_len": gap_len,
        "method": methods.first(),
        "rmse_dtw": rmse(&filled[span.clone()], &clean[span.clone()]),
        "rmse_linear": rmse(&linear, &clean[span]),
    })
    .to_string())
}

/// Scores `n` rows (one theft row in eleven) from two unit-variance normals
/// `separation` apart and reports metrics at `threshold`.
#[wasm_bindgen]
pub fn score_curves(separation: f64, n: usize, threshold: f64, seed: u64) -> Result<String, JsValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(22);
    let y: Vec<u8> = (0..n).map(|i| (i % 11 == 0) as u8).collect();
    let scores: Vec<f64> = y
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + separation * l as f64 + rng.random::<f64>() * 1e-9
        })
        .collect();
    let pred: Vec<u8> = scores.iter().map(|&s| (s >= threshold) as u8).collect();
    let report = metrics_report(&y, &pred, &scores).map_err(js_err)?;
    Ok(serde_json::to_string(&report).map_err(js_err)?)
}

/// One genuine and one theft consumer from the generator with the attacks
/// planted on the theft row.
#[wasm_bindgen]
pub fn consumer_profiles(seed: u64) -> Result<String, JsValue> {
    let (m, truth) = consumers(seed, 12, 0.5)?;
    let genuine = m.labels().iter().position(|&l| l == 0).expect("both classes");
    let theft = m.labels().iter().position(|&l| l == 1).expect("both classes");
    Ok(json!({
        "dates": m.dates().iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "genuine": truth.clean.row(genuine).to_vec(),
        "theft": truth.clean.row(theft).to_vec(),
        "attacks": truth.attacks[theft],
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demos_return_json() {
        let v: serde_json::Value = serde_json::from_str(&impute_gap(3, 100, 10).unwrap()).unwrap();
        assert_eq!(v["linear"].as_array().unwrap().len(), 10);
        let v: serde_json::Value = serde_json::from_str(&score_curves(2.0, 200, 1.0, 1).unwrap()).unwrap();
        assert!(v["auc_roc"].as_f64().unwrap() > 0.8);
        let v: serde_json::Value = serde_json::from_str(&consumer_profiles(0).unwrap()).unwrap();
        assert!(!v["attacks"].as_array().unwrap().is_empty());
    }
}
