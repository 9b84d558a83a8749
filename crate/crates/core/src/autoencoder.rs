//! Stacked autoencoder trained greedily, one level at a time.
//!
//! Level `l` maps width `d[l-1]` to `d[l]`. Its encoder is
//! `Dense -> ReLU -> BatchNorm`; its decoder is `Dense -> Sigmoid`, followed
//! by a `BatchNorm` on every level except the first (whose output is the
//! `[0, 1]`-scaled input itself). The stacked model chains the encoders in
//! order and the decoders in reverse.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MinMaxScaler;
use crate::nn::{train_step, Adam, AdamConfig, BatchNorm, Dense, Layer, Loss, NeuralNet, NnError};

#[derive(Debug, thiserror::Error)]
pub enum AeError {
    #[error("layer widths must be strictly decreasing and >= 1, got input {input} with {dims:?}")]
    BadDims { input: usize, dims: Vec<usize> },
    #[error("need at least {batch} rows for one batch, got {rows}")]
    TooFewRows { rows: usize, batch: usize },
    #[error("data has {got} columns, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("training autoencoder {level} diverged: {source}")]
    Diverged { level: usize, source: NnError },
    #[error(transparent)]
    Net(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    /// Maximum epochs per level.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    /// Stop a level once `early_stop_patience` epochs pass without the
    /// epoch loss beating its best value by more than `early_stop_delta`.
    pub early_stop_patience: usize,
    pub early_stop_delta: f64,
    /// Epochs of end-to-end training of the whole stack after the greedy pass.
    pub fine_tune_epochs: usize,
}

impl Default for SaeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            seed: 0,
            optimizer: AdamConfig::default(),
            early_stop_patience: 10,
            early_stop_delta: 1e-6,
            fine_tune_epochs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedAutoencoder {
    pub input_dim: usize,
    pub dims: Vec<usize>,
    pub encoder: NeuralNet,
    pub decoder: NeuralNet,
    /// Column scaling applied to raw inputs before encoding, if known.
    pub scaler: Option<MinMaxScaler>,
}

/// Per-level epoch losses of a greedy training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub levels: Vec<Vec<f64>>,
    pub fine_tune: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub per_row_mse: Vec<f64>,
    pub retained_variance: f64,
}

/// Builds an untrained stack with Glorot-initialised dense layers.
pub fn build_sae(input_dim: usize, dims: &[usize], seed: u64) -> Result<StackedAutoencoder, AeError> {
    let widths: Vec<usize> = std::iter::once(input_dim).chain(dims.iter().copied()).collect();
    if dims.is_empty() || widths.windows(2).any(|w| w[1] >= w[0] || w[1] == 0) {
        return Err(AeError::BadDims { input: input_dim, dims: dims.to_vec() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = Vec::new();
    let mut dec_levels = Vec::new();
    for (level, w) in widths.windows(2).enumerate() {
        enc.push(Layer::Dense(Dense::glorot(w[0], w[1], &mut rng)));
        enc.push(Layer::Relu);
        enc.push(Layer::BatchNorm(BatchNorm::new(w[1])));
        let mut d = vec![Layer::Dense(Dense::glorot(w[1], w[0], &mut rng)), Layer::Sigmoid];
        if level > 0 {
            d.push(Layer::BatchNorm(BatchNorm::new(w[0])));
        }
        dec_levels.push(d);
    }
    let dec: Vec<Layer> = dec_levels.into_iter().rev().flatten().collect();
    Ok(StackedAutoencoder {
        input_dim,
        dims: dims.to_vec(),
        encoder: NeuralNet::new(enc)?,
        decoder: NeuralNet::new(dec)?,
        scaler: None,
    })
}

impl StackedAutoencoder {
    pub fn latent_dim(&self) -> usize {
        *self.dims.last().expect("at least one level")
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    pub fn count_params(&self) -> usize {
        self.encoder.count_params() + self.decoder.count_params()
    }

    /// Decoder layer range of `level` inside `self.decoder`.
    fn decoder_range(&self, level: usize) -> std::ops::Range<usize> {
        let len = |l: usize| if l == 0 { 2 } else { 3 };
        let start: usize = (level + 1..self.levels()).map(len).sum();
        start..start + len(level)
    }

    /// The standalone autoencoder of one level, sharing the stack's weights.
    pub fn level_autoencoder(&self, level: usize) -> NeuralNet {
        let mut layers: Vec<Layer> = self.encoder.layers()[3 * level..3 * level + 3].to_vec();
        layers.extend_from_slice(&self.decoder.layers()[self.decoder_range(level)]);
        NeuralNet::new(layers).expect("level widths agree")
    }

    fn store_level(&mut self, level: usize, net: NeuralNet) {
        let layers = net.into_layers();
        let (enc, dec) = layers.split_at(3);
        self.encoder.layers_mut()[3 * level..3 * level + 3].clone_from_slice(enc);
        let range = self.decoder_range(level);
        self.decoder.layers_mut()[range].clone_from_slice(dec);
    }

    fn check(&self, data: &Array2<f64>) -> Result<(), AeError> {
        if data.ncols() != self.input_dim {
            return Err(AeError::Dimension { got: data.ncols(), expected: self.input_dim });
        }
        Ok(())
    }

    /// Inference-mode latent codes of `[0, 1]`-scaled rows.
    pub fn encode(&self, data: &Array2<f64>) -> Result<Array2<f64>, AeError> {
        self.check(data)?;
        Ok(self.encoder.predict(data)?)
    }

    pub fn decode(&self, latent: &Array2<f64>) -> Result<Array2<f64>, AeError> {
        Ok(self.decoder.predict(latent)?)
    }

    pub fn reconstruct(&self, data: &Array2<f64>) -> Result<Array2<f64>, AeError> {
        self.decode(&self.encode(data)?)
    }

    /// Encoder output after the first `levels` levels.
    fn encode_partial(&self, data: &Array2<f64>, levels: usize) -> Result<Array2<f64>, AeError> {
        let net = NeuralNet::new(self.encoder.layers()[..3 * levels].to_vec())?;
        Ok(net.predict(data)?)
    }
}

/// Trains each level on the codes of the previous one, then optionally
/// fine-tunes the whole stack. Every level ends with its batch-norm running
/// statistics set to the exact statistics of its training input.
pub fn train_greedy(
    model: &StackedAutoencoder,
    data: &Array2<f64>,
    config: &SaeConfig,
) -> Result<(StackedAutoencoder, TrainHistory), AeError> {
    model.check(data)?;
    let mut out = model.clone();
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        history.levels = vec![Vec::new(); model.levels()];
        return Ok((out, history));
    }
    let batch = config.batch_size.max(2);
    if data.nrows() < batch {
        return Err(AeError::TooFewRows { rows: data.nrows(), batch });
    }
    for level in 0..model.levels() {
        let input = out.encode_partial(data, level)?;
        let mut net = out.level_autoencoder(level);
        let seed = config.seed.wrapping_add(level as u64 * 0x9E37_79B9);
        let losses = fit(&mut net, &input, &input, config, config.epochs, seed).map_err(|source| AeError::Diverged { level: level + 1, source })?;
        net.recalibrate_batchnorm(&input)?;
        out.store_level(level, net);
        history.levels.push(losses);
    }
    if config.fine_tune_epochs > 0 {
        let enc_len = out.encoder.layers().len();
        let mut layers = out.encoder.layers().to_vec();
        layers.extend_from_slice(out.decoder.layers());
        let mut net = NeuralNet::new(layers)?;
        let seed = config.seed.wrapping_add(0xF1E7);
        history.fine_tune = fit(&mut net, data, data, config, config.fine_tune_epochs, seed)
            .map_err(|source| AeError::Diverged { level: 0, source })?;
        net.recalibrate_batchnorm(data)?;
        let layers = net.into_layers();
        out.encoder = NeuralNet::new(layers[..enc_len].to_vec())?;
        out.decoder = NeuralNet::new(layers[enc_len..].to_vec())?;
    }
    out.encoder.set_training(false);
    out.decoder.set_training(false);
    Ok((out, history))
}

/// Mini-batch training with per-epoch shuffling and early stopping.
/// A trailing partial batch is merged into the previous one.
fn fit(net: &mut NeuralNet, input: &Array2<f64>, target: &Array2<f64>, config: &SaeConfig, epochs: usize, seed: u64) -> Result<Vec<f64>, NnError> {
    net.set_training(true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(config.optimizer);
    let n = input.nrows();
    let batch = config.batch_size.max(2).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(epochs);
    let (mut best, mut since_best) = (f64::INFINITY, 0);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let n_batches = (n / batch).max(1);
        let mut total = 0.0;
        for b in 0..n_batches {
            let end = if b + 1 == n_batches { n } else { (b + 1) * batch };
            let idx = &order[b * batch..end];
            let x = input.select(Axis(0), idx);
            let t = target.select(Axis(0), idx);
            total += train_step(net, &mut opt, &x, &t, Loss::Mse)? * idx.len() as f64;
        }
        let loss = total / n as f64;
        losses.push(loss);
        if loss < best - config.early_stop_delta {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    Ok(losses)
}

/// `1 - SSE(reconstruction) / SS(data about its column means)`.
pub fn retained_variance(data: &Array2<f64>, reconstruction: &Array2<f64>) -> f64 {
    let mean: Array1<f64> = data.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(data.ncols()));
    let total: f64 = (data - &mean).iter().map(|v| v * v).sum();
    let sse: f64 = (data - reconstruction).iter().map(|v| v * v).sum();
    if total == 0.0 {
        return if sse == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - sse / total
}

pub fn reconstruction_error(model: &StackedAutoencoder, data: &Array2<f64>) -> Result<ReconstructionReport, AeError> {
    let recon = model.reconstruct(data)?;
    let cols = data.ncols().max(1) as f64;
    let per_row_mse = (0..data.nrows())
        .map(|i| {
            let diff = &data.slice(s![i, ..]) - &recon.slice(s![i, ..]);
            diff.iter().map(|v| v * v).sum::<f64>() / cols
        })
        .collect();
    Ok(ReconstructionReport {
        per_row_mse,
        retained_variance: retained_variance(data, &recon),
    })
}
