mod features;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::{concatenate, Axis};
use ntl_core::augmentation::{sample_synthetic, train_wgan_gp, ClassRatio, GanConfig};
use ntl_core::autoencoder::{build_sae, reconstruction_error, train_greedy, SaeConfig, StackedAutoencoder};
use ntl_core::data::{load_csv, save_csv, ConsumptionMatrix, CsvSchema, MinMaxScaler};
use ntl_core::ensemble::{ensemble_fit, grid_search_cv, EnsembleModel, ParamGrid, VoteMode};
use ntl_core::imputation::impute_matrix;
use ntl_core::metrics::MetricsReport;
use ntl_core::nn::AdamConfig;
use ntl_core::pipeline::{
    emit_curves, evaluate_bundle, generate_synthetic_dataset, run_repeats, stage_seed, ModelBundle, PipelineConfig, PipelineError,
    RepeatReport, RunReport, SeededStage, SynthParams,
};
use ntl_core::preprocess::{near_miss_undersample, zscore_filter};
use serde::Serialize;

use features::FeatureTable;

/// Electricity-theft detection from smart-meter consumption series.
#[derive(Parser)]
#[command(name = "ntl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled consumption dataset with planted attacks and gaps.
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 800)]
        n_consumers: usize,
        #[arg(long, default_value_t = 365)]
        n_days: usize,
        #[arg(long, default_value_t = 1.0 / 11.0)]
        theft_fraction: f64,
        #[arg(long, default_value_t = 0.25)]
        missing_fraction: f64,
    },
    /// Fill missing readings by seasonal DTW matching.
    Impute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        search_size: Option<usize>,
        #[arg(long)]
        min_gap: Option<usize>,
    },
    /// Drop Z-score outlier consumers and balance the classes with Near-Miss.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        zscore_threshold: Option<f64>,
        #[arg(long)]
        nearmiss_k: Option<usize>,
        #[arg(long)]
        target_per_class: Option<usize>,
    },
    /// Train the stacked autoencoder and write the latent features.
    TrainSae {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the WGAN-GP on a feature table and append synthetic rows.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
        /// Genuine:theft proportion of generated rows, e.g. 2:1.
        #[arg(long)]
        ratio: Option<ClassRatio>,
        #[arg(long)]
        pac: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the voting ensemble on a feature table.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// soft-vote or stacked.
        #[arg(long)]
        mode: Option<String>,
        /// JSON object of dotted ensemble-config paths to candidate values.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Score a labelled consumption CSV with persisted models.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Model bundle written by `run`.
        #[arg(long, conflicts_with_all = ["sae", "ensemble"])]
        model: Option<PathBuf>,
        /// Autoencoder written by `train-sae`; needs `--ensemble`.
        #[arg(long, requires = "ensemble")]
        sae: Option<PathBuf>,
        /// Ensemble written by `train`; needs `--sae`.
        #[arg(long, requires = "sae")]
        ensemble: Option<PathBuf>,
    },
    /// Run every stage end to end and evaluate on a held-out split.
    Run {
        #[command(flatten)]
        common: Common,
        /// Consumption CSV; a synthetic dataset is generated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        test_fraction: Option<f64>,
        /// Re-run the model stages with derived seeds and report mean and std.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Draw a fresh train/test split for every repeat.
        #[arg(long)]
        resplit: bool,
    },
    /// Summarise a run or repeat report and re-emit its curve files.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    stage: String,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let message = match &e {
            PipelineError::Stage { message, .. } => message.clone(),
            other => other.to_string(),
        };
        Failure { stage: e.stage_name().to_string(), message }
    }
}

type Res<T> = Result<T, Failure>;

fn fail(stage: &str) -> impl Fn(String) -> Failure + '_ {
    move |message| Failure { stage: stage.to_string(), message }
}

fn tag<E: std::fmt::Display>(stage: &str) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure { stage: stage.to_string(), message: e.to_string() }
}

impl Common {
    fn load_config(&self) -> Res<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure { stage: "config".into(), message: format!("{}: {e}", path.display()) })?;
                serde_json::from_str(&text).map_err(|e| Failure { stage: "config".into(), message: format!("{}: {e}", path.display()) })?
            }
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn out(&self, name: &str) -> Res<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Failure { stage: "io".into(), message: format!("{}: {e}", self.out_dir.display()) })?;
        Ok(self.out_dir.join(name))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    fs::write(path, text).map_err(|e| Failure { stage: "io".into(), message: format!("{}: {e}", path.display()) })
}

fn read_json<T: serde::de::DeserializeOwned>(stage: &str, path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure { stage: stage.into(), message: format!("{}: {e}", path.display()) })?;
    serde_json::from_str(&text).map_err(|e| Failure { stage: stage.into(), message: format!("{}: {e}", path.display()) })
}

fn load_matrix(stage: &str, path: &Path) -> Res<ConsumptionMatrix> {
    load_csv(path, &CsvSchema::default()).map_err(|e| Failure { stage: stage.into(), message: format!("{}: {e}", path.display()) })
}

fn save_matrix(m: &ConsumptionMatrix, path: &Path) -> Res<()> {
    save_csv(m, path).map_err(|e| Failure { stage: "io".into(), message: format!("{}: {e}", path.display()) })
}

fn dense(stage: &str, m: &ConsumptionMatrix) -> Res<ndarray::Array2<f64>> {
    m.to_dense().map_err(|e| Failure { stage: stage.into(), message: format!("{e}; run `impute` first") })
}

fn say(line: String) {
    println!("{line}");
}

fn print_metrics(m: &MetricsReport) {
    say(format!(
        "precision {:.4}  recall {:.4}  f1 {:.4}  fpr {:.4}  auc {:.4}  pr-auc {:.4}  mcc {:.4}",
        m.precision, m.recall, m.f1, m.fpr, m.auc_roc, m.pr_auc, m.mcc
    ));
    let c = &m.confusion;
    say(format!("confusion tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_));
}

fn synth_data(common: &Common, n_consumers: usize, n_days: usize, theft_fraction: f64, missing_fraction: f64) -> Res<()> {
    let params = SynthParams {
        n_consumers,
        n_days,
        theft_fraction,
        missing_fraction,
        seed: common.seed.unwrap_or(0),
        ..SynthParams::default()
    };
    let (m, truth) = generate_synthetic_dataset(&params)?;
    save_matrix(&m, &common.out("data.csv")?)?;
    let clean = ConsumptionMatrix::from_dense(m.consumer_ids().to_vec(), m.labels().to_vec(), m.dates().to_vec(), &truth.clean).map_err(tag("synth-data"))?;
    save_matrix(&clean, &common.out("clean.csv")?)?;
    let attacks: Vec<_> = m
        .consumer_ids()
        .iter()
        .zip(&truth.attacks)
        .filter(|(_, a)| !a.is_empty())
        .map(|(id, a)| serde_json::json!({ "consumer_id": id, "attacks": a }))
        .collect();
    write_json(&common.out("ground_truth.json")?, &serde_json::json!({ "params": params, "missing_cells": truth.missing_cells, "theft": attacks }))?;
    say(format!("{} consumers x {} days, {} theft, {} missing cells", m.n_rows(), m.n_cols(), attacks.len(), truth.missing_cells));
    Ok(())
}

fn impute(common: &Common, input: &Path, search_size: Option<usize>, min_gap: Option<usize>) -> Res<()> {
    let mut config = common.load_config()?.impute;
    config.search_size = search_size.unwrap_or(config.search_size);
    config.min_gap = min_gap.unwrap_or(config.min_gap);
    let m = load_matrix("impute", input)?;
    let (filled, summary) = impute_matrix(&m, &config).map_err(tag("impute"))?;
    save_matrix(&filled, &common.out("imputed.csv")?)?;
    write_json(&common.out("impute_summary.json")?, &summary)?;
    say(format!("filled {} cells in {} gaps", summary.cells_filled, summary.gaps_filled));
    Ok(())
}

fn preprocess(common: &Common, input: &Path, threshold: Option<f64>, k: Option<usize>, target: Option<usize>) -> Res<()> {
    let config = common.load_config()?;
    let threshold = threshold.unwrap_or(config.zscore.threshold);
    let k = k.unwrap_or(config.nearmiss.k);
    let m = load_matrix("preprocess", input)?;
    let (filtered, report) = zscore_filter(&m, threshold, config.zscore.axis).map_err(tag("zscore"))?;
    save_matrix(&filtered, &common.out("filtered.csv")?)?;
    write_json(&common.out("zscore_report.json")?, &report)?;
    say(format!("z-score kept {} rows, dropped {}", report.kept_rows.len(), report.dropped_rows.len()));

    let x = dense("nearmiss", &filtered)?;
    let scaled = MinMaxScaler::fit(&x).transform(&x);
    let labels = filtered.labels();
    let theft = labels.iter().filter(|&&l| l == 1).count();
    let target = target.or(config.nearmiss.target_per_class).unwrap_or(theft.min(labels.len() - theft));
    let balanced = near_miss_undersample(&scaled, labels, k, target, stage_seed(config.seed, SeededStage::NearMiss)).map_err(tag("nearmiss"))?;
    save_matrix(&filtered.select_rows(&balanced.indices), &common.out("balanced.csv")?)?;
    let ids: Vec<&String> = balanced.indices.iter().map(|&i| &filtered.consumer_ids()[i]).collect();
    write_json(&common.out("nearmiss.json")?, &serde_json::json!({ "k": k, "target_per_class": target, "consumer_ids": ids }))?;
    say(format!("near-miss kept {target} rows per class"));
    Ok(())
}

fn train_sae(common: &Common, input: &Path, epochs: Option<usize>) -> Res<()> {
    let config = common.load_config()?;
    let ae = &config.autoencoder;
    let m = load_matrix("train-sae", input)?;
    let raw = dense("train-sae", &m)?;
    let scaler = MinMaxScaler::fit(&raw);
    let x = scaler.transform(&raw);
    let dims = ae.effective_dims(x.ncols());
    let seed = stage_seed(config.seed, SeededStage::Autoencoder);
    let model = build_sae(x.ncols(), &dims, seed).map_err(tag("train-sae"))?;
    let sae_config = SaeConfig {
        epochs: epochs.unwrap_or(ae.epochs),
        batch_size: ae.batch_size.min(x.nrows()),
        seed,
        optimizer: AdamConfig { learning_rate: ae.learning_rate, ..AdamConfig::default() },
        early_stop_patience: ae.early_stop_patience,
        ..SaeConfig::default()
    };
    let (mut sae, history) = train_greedy(&model, &x, &sae_config).map_err(tag("train-sae"))?;
    let recon = reconstruction_error(&sae, &x).map_err(tag("train-sae"))?;
    sae.scaler = Some(scaler);
    let latent = sae.encode(&x).map_err(tag("train-sae"))?;
    write_json(&common.out("sae.json")?, &sae)?;
    write_json(&common.out("sae_history.json")?, &history)?;
    FeatureTable::real(m.consumer_ids().to_vec(), m.labels().to_vec(), latent).write(&common.out("latent.csv")?).map_err(fail("io"))?;
    say(format!("stack {:?} -> {:?}, retained variance {:.4}", x.ncols(), dims, recon.retained_variance));
    Ok(())
}

fn augment(common: &Common, input: &Path, n_samples: Option<usize>, ratio: Option<ClassRatio>, pac: Option<usize>, epochs: Option<usize>) -> Res<()> {
    let config = common.load_config()?;
    let aug = &config.augmentation;
    let table = FeatureTable::read(input).map_err(fail("augment"))?;
    let pac = pac.unwrap_or(aug.pac);
    let batch = (aug.batch_size.min(table.features.nrows()) / pac.max(1)) * pac.max(1);
    let gan_config = GanConfig {
        epochs: epochs.unwrap_or(aug.epochs),
        batch_size: batch,
        pac,
        nonnegative: table.features.iter().all(|&v| v >= 0.0),
        seed: stage_seed(config.seed, SeededStage::Gan),
        ..GanConfig::default()
    };
    let (model, history) = train_wgan_gp(&table.features, &table.labels, &gan_config).map_err(tag("augment"))?;
    let n = n_samples.unwrap_or(aug.n_samples);
    let (rows, labels) = sample_synthetic(&model, n, ratio.unwrap_or(aug.ratio), stage_seed(config.seed, SeededStage::Sample)).map_err(tag("augment"))?;
    let features = concatenate(Axis(0), &[table.features.view(), rows.view()]).map_err(tag("augment"))?;
    let mut out = FeatureTable {
        ids: table.ids.clone(),
        labels: table.labels.clone(),
        synthetic: table.synthetic.clone(),
        features,
    };
    out.ids.extend((0..n).map(|i| format!("syn-{i:05}")));
    out.labels.extend(&labels);
    out.synthetic.extend(std::iter::repeat_n(true, n));
    out.write(&common.out("augmented.csv")?).map_err(fail("io"))?;
    write_json(&common.out("gan_history.json")?, &history)?;
    let theft = labels.iter().filter(|&&l| l == 1).count();
    say(format!("generated {} genuine and {theft} theft rows", n - theft));
    Ok(())
}

fn train(common: &Common, input: &Path, mode: Option<&str>, grid: Option<&Path>, folds: Option<usize>) -> Res<()> {
    let config = common.load_config()?;
    let mut ens = config.ensemble.clone();
    if let Some(mode) = mode {
        ens.mode = serde_json::from_value(serde_json::Value::String(mode.into())).map_err(|_| Failure {
            stage: "train".into(),
            message: format!("unknown mode {mode:?}, expected soft-vote or stacked"),
        })?;
    }
    let table = FeatureTable::read(input).map_err(fail("train"))?;
    let seed = stage_seed(config.seed, SeededStage::Ensemble);
    let grid: Option<ParamGrid> = match grid {
        Some(path) => Some(read_json("train", path)?),
        None => config.grid.clone(),
    };
    if let Some(grid) = &grid {
        let result = grid_search_cv(&table.features, &table.labels, &ens, grid, folds.unwrap_or(config.grid_folds), seed).map_err(tag("train"))?;
        write_json(&common.out("grid_result.json")?, &result)?;
        say(format!("grid best {}", serde_json::to_string(&result.best_params).expect("serialisable")));
        ens = result.best_config;
    }
    let model = ensemble_fit(&table.features, &table.labels, &ens, seed).map_err(tag("train"))?;
    fs::write(common.out("ensemble.json")?, model.to_json()).map_err(tag("io"))?;
    let mode = if model.mode == VoteMode::Stacked { "stacked" } else { "soft-vote" };
    let synthetic = table.synthetic.iter().filter(|&&s| s).count();
    say(format!("trained {mode} ensemble on {} rows ({synthetic} synthetic)", table.labels.len()));
    Ok(())
}

fn evaluate(common: &Common, input: &Path, model: Option<&Path>, sae: Option<&Path>, ensemble: Option<&Path>) -> Res<()> {
    let config = common.load_config()?;
    let data = load_matrix("evaluate", input)?;
    let bundle = match (model, sae, ensemble) {
        (Some(path), _, _) => ModelBundle::load(path)?,
        (None, Some(sae), Some(ens)) => {
            let sae: StackedAutoencoder = read_json("load-model", sae)?;
            let text = fs::read_to_string(ens).map_err(|e| Failure { stage: "load-model".into(), message: format!("{}: {e}", ens.display()) })?;
            let ensemble = EnsembleModel::from_json(&text).map_err(tag("load-model"))?;
            let n_days = sae.input_dim;
            ModelBundle::from_json(&ModelBundle::new(config.impute.clone(), sae, ensemble, n_days).to_json())?
        }
        _ => return Err(fail("evaluate")("pass --model, or --sae with --ensemble".into())),
    };
    let evaluation = evaluate_bundle(&bundle, &data)?;
    write_json(&common.out("evaluation.json")?, &evaluation)?;
    emit_curves(&evaluation.metrics, &common.out_dir)?;
    print_metrics(&evaluation.metrics);
    Ok(())
}

fn run(common: &Common, input: Option<&Path>, test_fraction: Option<f64>, repeats: usize, resplit: bool) -> Res<()> {
    let mut config = common.load_config()?;
    if let Some(f) = test_fraction {
        config.split.test_fraction = f;
    }
    config.validate()?;
    let data = match input {
        Some(path) => load_matrix("run", path)?,
        None => generate_synthetic_dataset(&SynthParams { seed: config.seed, ..SynthParams::default() })?.0,
    };
    let (repeat, report) = run_repeats(&config, &data, repeats, resplit, Some(&common.out_dir))?;
    for s in &report.stages {
        say(format!("{:<12} {:>9.3}s", s.stage, s.seconds));
    }
    print_metrics(&report.metrics);
    if repeats > 1 {
        print_repeats(&repeat);
    }
    Ok(())
}

fn print_repeats(r: &RepeatReport) {
    let (m, s) = (&r.mean, &r.std);
    say(format!("{} runs{}", r.repeats, if r.resplit { " with fresh splits" } else { "" }));
    for (name, mean, std) in [
        ("precision", m.precision, s.precision),
        ("recall", m.recall, s.recall),
        ("f1", m.f1, s.f1),
        ("auc", m.auc_roc, s.auc_roc),
        ("pr-auc", m.pr_auc, s.pr_auc),
        ("mcc", m.mcc, s.mcc),
    ] {
        say(format!("{name:<10} {mean:.4} ± {std:.4}"));
    }
}

fn report(common: &Common, input: &Path) -> Res<()> {
    let value: serde_json::Value = read_json("report", input)?;
    if value.get("runs").is_some() {
        let r: RepeatReport = serde_json::from_value(value).map_err(tag("report"))?;
        print_repeats(&r);
        return Ok(());
    }
    let r: RunReport = serde_json::from_value(value).map_err(tag("report"))?;
    let total: f64 = r.stage_seconds();
    for s in &r.stages {
        say(format!("{:<12} {:>9.3}s {:>5.1}%", s.stage, s.seconds, 100.0 * s.seconds / total.max(f64::MIN_POSITIVE)));
    }
    let sp = &r.summary.split;
    say(format!("train {} rows ({} theft), test {} rows ({} theft)", sp.train_rows, sp.train_theft, sp.test_rows, sp.test_theft));
    print_metrics(&r.metrics);
    let m = &r.metrics.macro_avg;
    say(format!("macro precision {:.4}  recall {:.4}  f1 {:.4}", m.precision, m.recall, m.f1));
    for path in emit_curves(&r.metrics, &common.out_dir)? {
        say(format!("wrote {}", path.display()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Res<()> {
    match &cli.command {
        Command::SynthData { common, n_consumers, n_days, theft_fraction, missing_fraction } => {
            synth_data(common, *n_consumers, *n_days, *theft_fraction, *missing_fraction)
        }
        Command::Impute { common, input, search_size, min_gap } => impute(common, input, *search_size, *min_gap),
        Command::Preprocess { common, input, zscore_threshold, nearmiss_k, target_per_class } => {
            preprocess(common, input, *zscore_threshold, *nearmiss_k, *target_per_class)
        }
        Command::TrainSae { common, input, epochs } => train_sae(common, input, *epochs),
        Command::Augment { common, input, n_samples, ratio, pac, epochs } => augment(common, input, *n_samples, *ratio, *pac, *epochs),
        Command::Train { common, input, mode, grid, folds } => train(common, input, mode.as_deref(), grid.as_deref(), *folds),
        Command::Evaluate { common, input, model, sae, ensemble } => evaluate(common, input, model.as_deref(), sae.as_deref(), ensemble.as_deref()),
        Command::Run { common, input, test_fraction, repeats, resplit } => run(common, input.as_deref(), *test_fraction, *repeats, *resplit),
        Command::Report { common, input } => report(common, input),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.message);
            ExitCode::FAILURE
        }
    }
}
