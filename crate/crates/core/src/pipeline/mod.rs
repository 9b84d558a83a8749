//! End-to-end orchestration: configuration, stage chaining, held-out
//! evaluation, repeated runs and report emission.

pub mod bundle;
pub mod synth;

pub use bundle::{evaluate_bundle, Evaluation, ModelBundle, BUNDLE_SCHEMA_VERSION};
pub use synth::{generate_synthetic_dataset, Attack, AttackParams, GroundTruth, SynthParams};

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augmentation::{sample_synthetic, train_wgan_gp, ClassRatio, GanConfig};
use crate::autoencoder::{build_sae, retained_variance, train_greedy, SaeConfig};
use crate::data::{ConsumptionMatrix, MinMaxScaler};
use crate::ensemble::{ensemble_fit, grid_search_cv, vote_label, EnsembleConfig, ParamGrid, VoteMode};
use crate::imputation::{impute_matrix, ImputeConfig, ImputeSummary};
use crate::metrics::{curve_csv, metrics_report, CurveKind, MetricsReport};
use crate::nn::AdamConfig;
use crate::preprocess::{near_miss_undersample, zscore_filter, ZAxis};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TEST_FRACTIONS: [f64; 4] = [0.2, 0.3, 0.4, 0.5];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn stage(stage: &'static str, e: impl Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }

    /// Stage name for stage errors, `config` or `io` otherwise.
    pub fn stage_name(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Stage { stage, .. } => stage,
            PipelineError::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZScoreStage {
    pub enabled: bool,
    pub threshold: f64,
    pub axis: ZAxis,
}

impl Default for ZScoreStage {
    fn default() -> Self {
        Self { enabled: true, threshold: 3.0, axis: ZAxis::Column }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NearMissStage {
    pub enabled: bool,
    pub k: usize,
    /// Rows kept per class; `None` keeps the whole minority class.
    pub target_per_class: Option<usize>,
}

impl Default for NearMissStage {
    fn default() -> Self {
        Self { enabled: true, k: 3, target_per_class: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderStage {
    /// Encoder widths. Leading widths not narrower than the input are
    /// skipped, so the default stack also fits series shorter than 512 days.
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
}

impl Default for AutoencoderStage {
    fn default() -> Self {
        Self { dims: vec![512, 256, 128], epochs: 100, batch_size: 64, learning_rate: 1e-2, early_stop_patience: 10 }
    }
}

impl AutoencoderStage {
    pub fn effective_dims(&self, input_dim: usize) -> Vec<usize> {
        self.dims.iter().copied().skip_while(|&w| w >= input_dim).collect()
    }
}

/// Feature space the GAN learns and samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Encoder outputs; synthetic rows join the classifier input directly.
    #[default]
    Latent,
    /// Scaled daily readings; synthetic rows are encoded before use.
    Raw,
}

/// Real rows the GAN learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentSource {
    /// The whole real training split, before undersampling.
    #[default]
    Train,
    /// Only the rows Near-Miss kept.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentStage {
    pub enabled: bool,
    pub n_samples: usize,
    pub ratio: ClassRatio,
    pub pac: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub space: FeatureSpace,
    pub source: AugmentSource,
}

impl Default for AugmentStage {
    fn default() -> Self {
        Self { enabled: true, n_samples: 300, ratio: ClassRatio::default(), pac: 1, epochs: 100, batch_size: 100, space: FeatureSpace::Latent, source: AugmentSource::Train }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitStage {
    pub test_fraction: f64,
}

impl Default for SplitStage {
    fn default() -> Self {
        Self { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub impute: ImputeConfig,
    pub zscore: ZScoreStage,
    pub nearmiss: NearMissStage,
    pub autoencoder: AutoencoderStage,
    pub augmentation: AugmentStage,
    pub ensemble: EnsembleConfig,
    /// Dotted ensemble-config paths to candidate values, searched by k-fold CV.
    pub grid: Option<ParamGrid>,
    pub grid_folds: usize,
    pub split: SplitStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            impute: ImputeConfig::default(),
            zscore: ZScoreStage::default(),
            nearmiss: NearMissStage::default(),
            autoencoder: AutoencoderStage::default(),
            augmentation: AugmentStage::default(),
            ensemble: EnsembleConfig::default(),
            grid: None,
            grid_folds: 5,
            split: SplitStage::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.impute.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !TEST_FRACTIONS.iter().any(|&f| (f - self.split.test_fraction).abs() < 1e-12) {
            return bad(format!("test_fraction must be one of {TEST_FRACTIONS:?}, got {}", self.split.test_fraction));
        }
        if !(self.zscore.threshold > 0.0) {
            return bad(format!("zscore threshold must be > 0, got {}", self.zscore.threshold));
        }
        if self.nearmiss.k == 0 || self.nearmiss.target_per_class == Some(0) {
            return bad("nearmiss k and target_per_class must be >= 1".into());
        }
        let ae = &self.autoencoder;
        if ae.dims.is_empty() || ae.dims.windows(2).any(|w| w[1] >= w[0]) || ae.dims.contains(&0) {
            return bad(format!("autoencoder dims must be strictly decreasing and >= 1, got {:?}", ae.dims));
        }
        if ae.epochs == 0 || ae.batch_size < 2 || !(ae.learning_rate > 0.0) {
            return bad("autoencoder needs epochs >= 1, batch_size >= 2 and learning_rate > 0".into());
        }
        let aug = &self.augmentation;
        if aug.enabled && (aug.pac == 0 || aug.pac > 10 || aug.epochs == 0 || aug.batch_size < 2) {
            return bad("augmentation needs pac in 1..=10, epochs >= 1 and batch_size >= 2".into());
        }
        if self.grid.is_some() && self.grid_folds < 2 {
            return bad("grid search needs at least 2 folds".into());
        }
        self.ensemble.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let config: Self = serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Stages that draw random numbers; each gets a seed derived from the global one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeededStage {
    Split = 1,
    NearMiss = 2,
    Autoencoder = 3,
    Gan = 4,
    Sample = 5,
    Ensemble = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stage_seed(seed: u64, stage: SeededStage) -> u64 {
    splitmix64(seed ^ splitmix64(stage as u64))
}

/// Seed of repeat `run`; run 0 keeps the base seed.
pub fn repeat_seed(seed: u64, run: usize) -> u64 {
    if run == 0 {
        seed
    } else {
        splitmix64(seed.wrapping_add(run as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_theft: usize,
    pub test_theft: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub genuine: usize,
    pub theft: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSummary {
    pub dims: Vec<usize>,
    pub epochs_per_level: Vec<usize>,
    pub retained_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub space: FeatureSpace,
    pub generated: ClassCounts,
    pub final_critic_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub mode: VoteMode,
    pub train_rows: usize,
    pub grid_best: Option<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummaries {
    pub impute: ImputeSummary,
    pub zscore: Option<FilterSummary>,
    pub split: SplitSummary,
    pub nearmiss: Option<ClassCounts>,
    pub autoencoder: AutoencoderSummary,
    pub augmentation: Option<AugmentSummary>,
    pub ensemble: EnsembleSummary,
}

/// Where the rows of each set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_consumers: Vec<String>,
    pub synthetic_train_rows: usize,
    pub test_consumers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub split_seed: u64,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    pub summary: StageSummaries,
    pub metrics: MetricsReport,
    pub provenance: Provenance,
    pub config: PipelineConfig,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn stage_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

/// Training row origin, checked against the test set before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Real(usize),
    Synthetic(usize),
}

struct Timer {
    stages: Vec<StageTiming>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(StageTiming { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }
}

/// Imputed and filtered data shared by every split of a repeated run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: ConsumptionMatrix,
    pub impute: ImputeSummary,
    pub zscore: Option<FilterSummary>,
    pub stages: Vec<StageTiming>,
}

pub fn prepare(config: &PipelineConfig, data: &ConsumptionMatrix) -> Result<Prepared, PipelineError> {
    config.validate()?;
    let mut timer = Timer { stages: Vec::new() };
    let (imputed, impute) = timer.time("impute", || impute_matrix(data, &config.impute).map_err(|e| PipelineError::stage("impute", e)))?;
    let (matrix, zscore) = if config.zscore.enabled {
        timer.time("zscore", || {
            let (m, r) = zscore_filter(&imputed, config.zscore.threshold, config.zscore.axis).map_err(|e| PipelineError::stage("zscore", e))?;
            Ok((m, Some(FilterSummary { kept: r.kept_rows.len(), dropped: r.dropped_rows.len() })))
        })?
    } else {
        (imputed, None)
    };
    Ok(Prepared { matrix, impute, zscore, stages: timer.stages })
}

/// Stratified split: each class is shuffled and `round(fraction * size)` of
/// its rows go to the test set. Returns ascending (train, test) row indices.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_test = (test_fraction * rows.len() as f64).round() as usize;
        if n_test == 0 || n_test == rows.len() {
            return Err(PipelineError::stage("split", format!("class {class} has {} rows, too few to split at {test_fraction}", rows.len())));
        }
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fails if a test row is synthetic-derived or also used for training.
pub fn check_hygiene(train: &[RowSource], test: &[usize]) -> Result<(), PipelineError> {
    let test_set: std::collections::BTreeSet<usize> = test.iter().copied().collect();
    for src in train {
        if let RowSource::Real(i) = src {
            if test_set.contains(i) {
                return Err(PipelineError::stage("evaluate", format!("row {i} is in both the training and the test set")));
            }
        }
    }
    Ok(())
}

/// Everything fitted in one run.
pub struct Fitted {
    pub report: RunReport,
    pub bundle: ModelBundle,
}

/// Runs every stage on `data` and, with `out_dir`, persists the model
/// bundle, the report, the config and the curve files.
pub fn run_pipeline(config: &PipelineConfig, data: &ConsumptionMatrix, out_dir: Option<&Path>) -> Result<RunReport, PipelineError> {
    let prepared = prepare(config, data)?;
    let split_seed = stage_seed(config.seed, SeededStage::Split);
    let mut fitted = fit_and_evaluate(config, &prepared, config.seed, split_seed)?;
    if let Some(dir) = out_dir {
        persist(&mut fitted, dir)?;
    }
    Ok(fitted.report)
}

/// Split, balance, encode, augment, train and evaluate on prepared data.
/// `seed` drives the model stages and `split_seed` the train/test split.
pub fn fit_and_evaluate(config: &PipelineConfig, prepared: &Prepared, seed: u64, split_seed: u64) -> Result<Fitted, PipelineError> {
    let start = Instant::now();
    let mut timer = Timer { stages: prepared.stages.clone() };
    let m = &prepared.matrix;
    let labels = m.labels();
    let dense = m.to_dense().map_err(|e| PipelineError::stage("split", e))?;

    let (train_idx, test_idx) = timer.time("split", || stratified_split(labels, config.split.test_fraction, split_seed))?;
    let count_theft = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == 1).count();
    let split = SplitSummary {
        train_rows: train_idx.len(),
        test_rows: test_idx.len(),
        train_theft: count_theft(&train_idx),
        test_theft: count_theft(&test_idx),
    };

    let (scaler, x_train, x_test) = timer.time("normalize", || {
        let raw_train = dense.select(Axis(0), &train_idx);
        let scaler = MinMaxScaler::fit(&raw_train);
        let x_train = scaler.transform(&raw_train);
        let x_test = scaler.transform(&dense.select(Axis(0), &test_idx));
        Ok((scaler, x_train, x_test))
    })?;
    let y_train: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();

    // Positions within the training split.
    let (balanced, nearmiss) = if config.nearmiss.enabled {
        timer.time("nearmiss", || {
            let minority = split.train_theft.min(split.train_rows - split.train_theft);
            let target = config.nearmiss.target_per_class.unwrap_or(minority);
            let b = near_miss_undersample(&x_train, &y_train, config.nearmiss.k, target, stage_seed(seed, SeededStage::NearMiss))
                .map_err(|e| PipelineError::stage("nearmiss", e))?;
            let theft = b.labels.iter().filter(|&&l| l == 1).count();
            Ok((b.indices, Some(ClassCounts { genuine: b.labels.len() - theft, theft })))
        })?
    } else {
        ((0..train_idx.len()).collect(), None)
    };

    let (sae, ae_summary) = timer.time("autoencoder", || {
        let dims = config.autoencoder.effective_dims(x_train.ncols());
        if dims.is_empty() {
            return Err(PipelineError::stage("autoencoder", format!("no width in {:?} is below the input width {}", config.autoencoder.dims, x_train.ncols())));
        }
        let ae_seed = stage_seed(seed, SeededStage::Autoencoder);
        let model = build_sae(x_train.ncols(), &dims, ae_seed).map_err(|e| PipelineError::stage("autoencoder", e))?;
        let sae_config = SaeConfig {
            epochs: config.autoencoder.epochs,
            batch_size: config.autoencoder.batch_size.min(x_train.nrows()),
            seed: ae_seed,
            optimizer: AdamConfig { learning_rate: config.autoencoder.learning_rate, ..AdamConfig::default() },
            early_stop_patience: config.autoencoder.early_stop_patience,
            ..SaeConfig::default()
        };
        let (mut sae, history) = train_greedy(&model, &x_train, &sae_config).map_err(|e| PipelineError::stage("autoencoder", e))?;
        let recon = sae.reconstruct(&x_train).map_err(|e| PipelineError::stage("autoencoder", e))?;
        sae.scaler = Some(scaler.clone());
        let summary = AutoencoderSummary {
            dims,
            epochs_per_level: history.levels.iter().map(Vec::len).collect(),
            retained_variance: retained_variance(&x_train, &recon),
        };
        Ok((sae, summary))
    })?;
    let encode = |x: &Array2<f64>| sae.encode(x).map_err(|e| PipelineError::stage("autoencoder", e));
    let z_bal = encode(&x_train.select(Axis(0), &balanced))?;
    let y_bal: Vec<u8> = balanced.iter().map(|&p| y_train[p]).collect();
    let z_test = encode(&x_test)?;

    let mut sources: Vec<RowSource> = balanced.iter().map(|&p| RowSource::Real(train_idx[p])).collect();
    let (z_fit, y_fit, augment) = if config.augmentation.enabled {
        let aug = &config.augmentation;
        let (synthetic, y_syn, summary) = timer.time("augment", || {
            let rows: Vec<usize> = match aug.source {
                AugmentSource::Train => (0..train_idx.len()).collect(),
                AugmentSource::Balanced => balanced.clone(),
            };
            let gan_labels: Vec<u8> = rows.iter().map(|&p| y_train[p]).collect();
            let features = match aug.space {
                FeatureSpace::Latent => encode(&x_train.select(Axis(0), &rows))?,
                FeatureSpace::Raw => x_train.select(Axis(0), &rows),
            };
            let batch = (aug.batch_size.min(features.nrows()) / aug.pac) * aug.pac;
            let gan_config = GanConfig {
                epochs: aug.epochs,
                batch_size: batch,
                pac: aug.pac,
                nonnegative: aug.space == FeatureSpace::Raw,
                seed: stage_seed(seed, SeededStage::Gan),
                ..GanConfig::default()
            };
            let (model, history) = train_wgan_gp(&features, &gan_labels, &gan_config).map_err(|e| PipelineError::stage("augment", e))?;
            let (rows, y_syn) =
                sample_synthetic(&model, aug.n_samples, aug.ratio, stage_seed(seed, SeededStage::Sample)).map_err(|e| PipelineError::stage("augment", e))?;
            let rows = match aug.space {
                FeatureSpace::Latent => rows,
                FeatureSpace::Raw => encode(&rows.mapv(|v| v.clamp(0.0, 1.0)))?,
            };
            let theft = y_syn.iter().filter(|&&l| l == 1).count();
            let summary = AugmentSummary {
                space: aug.space,
                generated: ClassCounts { genuine: y_syn.len() - theft, theft },
                final_critic_loss: history.critic_loss.last().copied().unwrap_or(0.0),
            };
            Ok((rows, y_syn, summary))
        })?;
        sources.extend((0..y_syn.len()).map(RowSource::Synthetic));
        let z = concatenate(Axis(0), &[z_bal.view(), synthetic.view()]).map_err(|e| PipelineError::stage("augment", e))?;
        let y: Vec<u8> = y_bal.iter().chain(&y_syn).copied().collect();
        (z, y, Some(summary))
    } else {
        (z_bal, y_bal, None)
    };

    let ens_seed = stage_seed(seed, SeededStage::Ensemble);
    let (model, grid_best) = timer.time("ensemble", || {
        let (ens_config, grid_best) = match &config.grid {
            Some(grid) => {
                let r = grid_search_cv(&z_fit, &y_fit, &config.ensemble, grid, config.grid_folds, ens_seed).map_err(|e| PipelineError::stage("ensemble", e))?;
                (r.best_config, Some(r.best_params))
            }
            None => (config.ensemble.clone(), None),
        };
        let model = ensemble_fit(&z_fit, &y_fit, &ens_config, ens_seed).map_err(|e| PipelineError::stage("ensemble", e))?;
        Ok((model, grid_best))
    })?;

    let metrics = timer.time("evaluate", || {
        check_hygiene(&sources, &test_idx)?;
        let proba = model.predict_proba(&z_test).map_err(|e| PipelineError::stage("evaluate", e))?;
        let scores: Vec<f64> = proba.column(1).to_vec();
        let pred: Vec<u8> = proba.rows().into_iter().map(|r| vote_label([r[0], r[1]])).collect();
        metrics_report(&y_test, &pred, &scores).map_err(|e| PipelineError::stage("evaluate", e))
    })?;

    let ids = m.consumer_ids();
    let provenance = Provenance {
        train_consumers: sources
            .iter()
            .filter_map(|s| match s {
                RowSource::Real(i) => Some(ids[*i].clone()),
                RowSource::Synthetic(_) => None,
            })
            .collect(),
        synthetic_train_rows: sources.iter().filter(|s| matches!(s, RowSource::Synthetic(_))).count(),
        test_consumers: test_idx.iter().map(|&i| ids[i].clone()).collect(),
    };
    let summary = StageSummaries {
        impute: prepared.impute.clone(),
        zscore: prepared.zscore.clone(),
        split,
        nearmiss,
        autoencoder: ae_summary,
        augmentation: augment,
        ensemble: EnsembleSummary { mode: model.mode, train_rows: y_fit.len(), grid_best },
    };
    let prepared_seconds: f64 = prepared.stages.iter().map(|s| s.seconds).sum();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        split_seed,
        stages: timer.stages,
        total_seconds: prepared_seconds + start.elapsed().as_secs_f64(),
        summary,
        metrics,
        provenance,
        config: config.clone(),
        artifacts: Vec::new(),
    };
    let bundle = ModelBundle::new(config.impute.clone(), sae, model, m.n_cols());
    Ok(Fitted { report, bundle })
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn persist(fitted: &mut Fitted, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut artifacts = Vec::new();
    let bundle_path = dir.join("model.json");
    fitted.bundle.save(&bundle_path)?;
    artifacts.push(bundle_path);
    let config_path = dir.join("config.json");
    write_file(&config_path, &fitted.report.config.to_json())?;
    artifacts.push(config_path);
    artifacts.extend(emit_curves(&fitted.report.metrics, dir)?);
    let report_path = dir.join("report.json");
    artifacts.push(report_path.clone());
    fitted.report.artifacts = artifacts;
    write_file(&report_path, &serde_json::to_string_pretty(&fitted.report).expect("report serialises"))
}

/// Writes `roc.csv`, `pr.csv` and a `curves.json` index into `out_dir`.
pub fn emit_curves(metrics: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io { path: out_dir.to_path_buf(), source })?;
    let mut index = serde_json::Map::new();
    let mut paths = Vec::new();
    for (curve, auc, name) in [(&metrics.roc, metrics.auc_roc, "roc"), (&metrics.pr, metrics.pr_auc, "pr")] {
        let file = format!("{name}.csv");
        let path = out_dir.join(&file);
        write_file(&path, &curve_csv(curve))?;
        let kind = match curve.kind {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        };
        index.insert(name.to_string(), serde_json::json!({ "file": file, "kind": kind, "points": curve.points.len(), "auc": auc }));
        paths.push(path);
    }
    let index_path = out_dir.join("curves.json");
    write_file(&index_path, &serde_json::to_string_pretty(&Value::Object(index)).expect("index serialises"))?;
    paths.push(index_path);
    Ok(paths)
}

/// Scalar metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub auc_roc: f64,
    pub pr_auc: f64,
    pub mcc: f64,
}

impl MetricRow {
    pub fn from_report(m: &MetricsReport) -> Self {
        Self { precision: m.precision, recall: m.recall, f1: m.f1, fpr: m.fpr, auc_roc: m.auc_roc, pr_auc: m.pr_auc, mcc: m.mcc }
    }

    fn fields(&self) -> [f64; 7] {
        [self.precision, self.recall, self.f1, self.fpr, self.auc_roc, self.pr_auc, self.mcc]
    }

    fn from_fields(f: [f64; 7]) -> Self {
        Self { precision: f[0], recall: f[1], f1: f[2], fpr: f[3], auc_roc: f[4], pr_auc: f[5], mcc: f[6] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub run: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeats: usize,
    pub resplit: bool,
    pub mean: MetricRow,
    /// Population standard deviation over the runs.
    pub std: MetricRow,
    pub runs: Vec<RepeatRow>,
}

/// Mean and population standard deviation of each metric.
pub fn summarize(rows: &[MetricRow]) -> (MetricRow, MetricRow) {
    let n = rows.len() as f64;
    let mut mean = [0.0; 7];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.fields()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 7];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.fields()).zip(mean) {
            *s += (v - m).powi(2);
        }
    }
    (MetricRow::from_fields(mean), MetricRow::from_fields(var.map(|s| (s / n).sqrt())))
}

/// Re-runs the model stages `repeats` times with derived seeds. With
/// `resplit` each run also draws a fresh train/test split; otherwise every
/// run shares the first run's split. The first run is persisted to `out_dir`.
pub fn run_repeats(
    config: &PipelineConfig,
    data: &ConsumptionMatrix,
    repeats: usize,
    resplit: bool,
    out_dir: Option<&Path>,
) -> Result<(RepeatReport, RunReport), PipelineError> {
    if repeats == 0 {
        return Err(PipelineError::Config("repeats must be >= 1".into()));
    }
    let prepared = prepare(config, data)?;
    let base_split = stage_seed(config.seed, SeededStage::Split);
    let mut runs = Vec::with_capacity(repeats);
    let mut first = None;
    for run in 0..repeats {
        let seed = repeat_seed(config.seed, run);
        let split_seed = if resplit { stage_seed(seed, SeededStage::Split) } else { base_split };
        let mut fitted = fit_and_evaluate(config, &prepared, seed, split_seed)?;
        runs.push(RepeatRow { run, seed, split_seed, metrics: MetricRow::from_report(&fitted.report.metrics) });
        if run == 0 {
            if let Some(dir) = out_dir {
                persist(&mut fitted, dir)?;
            }
            first = Some(fitted.report);
        }
    }
    let rows: Vec<MetricRow> = runs.iter().map(|r| r.metrics).collect();
    let (mean, std) = summarize(&rows);
    let report = RepeatReport { repeats, resplit, mean, std, runs };
    if let Some(dir) = out_dir {
        write_file(&dir.join("repeats.json"), &serde_json::to_string_pretty(&report).expect("report serialises"))?;
    }
    Ok((report, first.expect("at least one run")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn bad_fraction_rejected() {
        let c = PipelineConfig { split: SplitStage { test_fraction: 0.25 }, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn default_stack_fits_short_series() {
        let ae = AutoencoderStage::default();
        assert_eq!(ae.effective_dims(1034), vec![512, 256, 128]);
        assert_eq!(ae.effective_dims(365), vec![256, 128]);
        assert_eq!(ae.effective_dims(100), Vec::<usize>::new());
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<u8> = (0..110).map(|i| (i % 11 == 0) as u8).collect();
        let (train, test) = stratified_split(&labels, 0.2, 4).unwrap();
        assert_eq!(test.len(), 22);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 2);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(train.len() + test.len(), 110);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let row = MetricRow { precision: 0.5, recall: 0.25, ..Default::default() };
        let (mean, std) = summarize(&[row]);
        assert_eq!(mean, row);
        assert_eq!(std, MetricRow::default());
    }
}
