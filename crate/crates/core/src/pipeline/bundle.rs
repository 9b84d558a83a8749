//! Persisted models of a run: imputation settings, the fitted scaler and
//! autoencoder, and the ensemble.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::autoencoder::StackedAutoencoder;
use crate::data::ConsumptionMatrix;
use crate::ensemble::{vote_label, EnsembleModel};
use crate::imputation::{impute_matrix, ImputeConfig};
use crate::metrics::{metrics_report, MetricsReport};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub n_days: usize,
    pub impute: ImputeConfig,
    /// Carries the column scaler fitted on the training split.
    pub autoencoder: StackedAutoencoder,
    pub ensemble: EnsembleModel,
}

/// Per-row scores and labels plus the metrics against the stored labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub consumer_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub predictions: Vec<u8>,
    pub metrics: MetricsReport,
}

impl ModelBundle {
    pub fn new(impute: ImputeConfig, autoencoder: StackedAutoencoder, ensemble: EnsembleModel, n_days: usize) -> Self {
        Self { schema_version: BUNDLE_SCHEMA_VERSION, n_days, impute, autoencoder, ensemble }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let bad = |e: serde_json::Error| PipelineError::stage("load-model", e);
        let header: Header = serde_json::from_str(s).map_err(bad)?;
        if header.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(PipelineError::stage(
                "load-model",
                format!("model bundle schema version {} is not the supported version {BUNDLE_SCHEMA_VERSION}", header.schema_version),
            ));
        }
        let bundle: Self = serde_json::from_str(s).map_err(bad)?;
        if bundle.ensemble.n_features != bundle.autoencoder.latent_dim() || bundle.autoencoder.input_dim != bundle.n_days {
            return Err(PipelineError::stage("load-model", "autoencoder and ensemble widths disagree"));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json()).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }
}

/// Imputes any missing cells, scales, encodes and scores `data`.
pub fn evaluate_bundle(bundle: &ModelBundle, data: &ConsumptionMatrix) -> Result<Evaluation, PipelineError> {
    if data.n_cols() != bundle.n_days {
        return Err(PipelineError::stage("evaluate", format!("data has {} days, model expects {}", data.n_cols(), bundle.n_days)));
    }
    let filled = if data.is_complete() {
        data.clone()
    } else {
        impute_matrix(data, &bundle.impute).map_err(|e| PipelineError::stage("impute", e))?.0
    };
    let dense = filled.to_dense().map_err(|e| PipelineError::stage("evaluate", e))?;
    let scaled = match &bundle.autoencoder.scaler {
        Some(s) => s.transform(&dense),
        None => dense,
    };
    let latent = bundle.autoencoder.encode(&scaled).map_err(|e| PipelineError::stage("evaluate", e))?;
    let proba = bundle.ensemble.predict_proba(&latent).map_err(|e| PipelineError::stage("evaluate", e))?;
    let scores: Vec<f64> = proba.column(1).to_vec();
    let predictions: Vec<u8> = proba.rows().into_iter().map(|r| vote_label([r[0], r[1]])).collect();
    let metrics = metrics_report(filled.labels(), &predictions, &scores).map_err(|e| PipelineError::stage("evaluate", e))?;
    Ok(Evaluation { consumer_ids: filled.consumer_ids().to_vec(), scores, predictions, metrics })
}
