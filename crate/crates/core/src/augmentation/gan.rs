//! Label-conditioned WGAN-GP over mode-specific-normalised rows, with
//! optional PacGAN packing of critic inputs.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AugmentError, ClassRatio, MsnTransformer};
use crate::nn::{Adam, AdamConfig, BatchNorm, Dense, Gradients, Layer, NeuralNet};

pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    /// Passes over the data; each pass is `max(1, rows / batch_size)` generator steps.
    pub epochs: usize,
    /// Rows per step; must be divisible by `pac`.
    pub batch_size: usize,
    /// Rows packed into one critic input.
    pub pac: usize,
    pub gp_lambda: f64,
    pub critic_steps: usize,
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub optimizer: AdamConfig,
    pub max_modes: usize,
    /// Clamp decoded samples at zero.
    pub nonnegative: bool,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 100,
            pac: 1,
            gp_lambda: 10.0,
            critic_steps: 5,
            noise_dim: 64,
            generator_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
            optimizer: AdamConfig {
                learning_rate: 2e-4,
                beta1: 0.5,
                beta2: 0.9,
                epsilon: 1e-8,
            },
            max_modes: 10,
            nonnegative: true,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.pac == 0 || self.pac > 10 {
            return Err(AugmentError::Config(format!("pac must be in 1..=10, got {}", self.pac)));
        }
        if self.batch_size == 0 || self.batch_size % self.pac != 0 {
            return Err(AugmentError::Config(format!(
                "batch size {} is not a positive multiple of pac {}",
                self.batch_size, self.pac
            )));
        }
        if self.batch_size < 2 {
            return Err(AugmentError::Config("batch size must be >= 2".into()));
        }
        if self.critic_steps == 0 || self.noise_dim == 0 {
            return Err(AugmentError::Config("critic_steps and noise_dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub generator: NeuralNet,
    pub critic: NeuralNet,
    pub transformer: MsnTransformer,
    pub noise_dim: usize,
    pub pac: usize,
    pub gp_lambda: f64,
    /// Class frequencies seen in training, used when sampling noise batches.
    pub class_prior: [f64; N_CLASSES],
}

/// Mean losses per generator step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanHistory {
    pub critic_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
}

/// Builds `Dense -> BatchNorm -> ReLU` hidden blocks and a linear output.
fn build_generator(input: usize, hidden: &[usize], output: usize, rng: &mut ChaCha8Rng) -> Result<NeuralNet, AugmentError> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::glorot(width, h, rng)));
        layers.push(Layer::BatchNorm(BatchNorm::new(h)));
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(Layer::Dense(Dense::glorot(width, output, rng)));
    Ok(NeuralNet::new(layers)?)
}

/// Builds `Dense -> ReLU` hidden blocks and a scalar linear output.
fn build_critic(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<NeuralNet, AugmentError> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::glorot(width, h, rng)));
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(Layer::Dense(Dense::glorot(width, 1, rng)));
    Ok(NeuralNet::new(layers)?)
}

/// Dense layers of a critic made of alternating `Dense` and `ReLU` layers
/// ending in a `Dense` with one output.
fn critic_dense(critic: &NeuralNet) -> Result<Vec<&Dense>, AugmentError> {
    let layers = critic.layers();
    let mut out = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        match (i % 2, layer) {
            (0, Layer::Dense(d)) => out.push(d),
            (1, Layer::Relu) => {}
            _ => return Err(AugmentError::Config("critic must alternate Dense and ReLU layers".into())),
        }
    }
    if layers.len() % 2 == 0 || out.last().map(|d| d.out_dim()) != Some(1) {
        return Err(AugmentError::Config("critic must end in a Dense layer with one output".into()));
    }
    Ok(out)
}

/// Gradient of the critic score with respect to its inputs, one row per input row.
pub fn critic_input_gradient(critic: &NeuralNet, x: &Array2<f64>) -> Result<Array2<f64>, AugmentError> {
    let dense = critic_dense(critic)?;
    let (_, deltas) = critic_masks_and_deltas(&dense, x);
    Ok(deltas[0].dot(&dense[0].weight.t()))
}

/// ReLU masks of every hidden layer and the back-propagated score signal
/// `d score / d pre-activation` of every layer, for each row.
fn critic_masks_and_deltas(dense: &[&Dense], x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let l = dense.len();
    let mut masks = Vec::with_capacity(l - 1);
    let mut h = x.clone();
    for d in &dense[..l - 1] {
        let a = h.dot(&d.weight) + &d.bias;
        masks.push(a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        h = a.mapv(|v| v.max(0.0));
    }
    let mut deltas = vec![Array2::zeros((0, 0)); l];
    deltas[l - 1] = Array2::ones((x.nrows(), 1));
    for i in (0..l - 1).rev() {
        deltas[i] = deltas[i + 1].dot(&dense[i + 1].weight.t()) * &masks[i];
    }
    (masks, deltas)
}

/// `lambda * mean_i (||grad_x score(x_i)||_2 - 1)^2` and its gradient with
/// respect to every critic parameter (in `NeuralNet::params` order).
///
/// The input gradient of a ReLU network is `W1 M1 W2 M2 ... WL` with the
/// masks fixed around each point, so the penalty depends on the weights only;
/// bias gradients are zero.
pub fn gradient_penalty(critic: &NeuralNet, x: &Array2<f64>, lambda: f64) -> Result<(f64, Gradients), AugmentError> {
    let dense = critic_dense(critic)?;
    let n = x.nrows().max(1) as f64;
    let (masks, deltas) = critic_masks_and_deltas(&dense, x);
    let g = deltas[0].dot(&dense[0].weight.t());
    let norms: Array1<f64> = g.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let penalty = lambda * norms.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n;

    // u = d penalty / d g, pushed forward through the layers with fixed masks.
    let coef = norms.mapv(|v| if v > 0.0 { lambda * 2.0 / n * (v - 1.0) / v } else { 0.0 });
    let mut f = &g * &coef.insert_axis(Axis(1));
    let mut grads = Vec::with_capacity(2 * dense.len());
    for (i, d) in dense.iter().enumerate() {
        let dw = f.t().dot(&deltas[i]);
        grads.push(dw.as_standard_layout().iter().copied().collect());
        grads.push(vec![0.0; d.out_dim()]);
        if i + 1 < dense.len() {
            f = f.dot(&d.weight) * &masks[i];
        }
    }
    Ok((penalty, grads))
}

/// Applies `tanh` to every alpha column and a softmax to every mode block.
fn head_forward(raw: &Array2<f64>, layout: &[(usize, usize, usize)]) -> Array2<f64> {
    let mut out = raw.clone();
    for mut row in out.rows_mut() {
        for &(a, first, k) in layout {
            row[a] = row[a].tanh();
            let block = row.slice(s![first..first + k]).to_owned();
            let m = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e = block.mapv(|v| (v - m).exp());
            let sum = e.sum();
            row.slice_mut(s![first..first + k]).assign(&(e / sum));
        }
    }
    out
}

fn head_backward(activated: &Array2<f64>, grad: &Array2<f64>, layout: &[(usize, usize, usize)]) -> Array2<f64> {
    let mut out = grad.clone();
    for (mut g, y) in out.rows_mut().into_iter().zip(activated.rows()) {
        for &(a, first, k) in layout {
            g[a] *= 1.0 - y[a] * y[a];
            let sm = y.slice(s![first..first + k]);
            let gb = g.slice(s![first..first + k]).to_owned();
            let dot = gb.dot(&sm);
            g.slice_mut(s![first..first + k]).assign(&(&sm * &(gb - dot)));
        }
    }
    out
}

fn one_hot(labels: &[u8]) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), N_CLASSES));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l as usize]] = 1.0;
    }
    out
}

fn noise(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, dim), || rng.sample::<f64, _>(StandardNormal))
}

/// Concatenates `pac` consecutive rows into one.
pub fn pack(x: &Array2<f64>, pac: usize) -> Array2<f64> {
    let (rows, width) = x.dim();
    assert_eq!(rows % pac, 0, "rows must be divisible by pac");
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows / pac, pac * width))
        .expect("contiguous")
}

pub fn unpack(x: &Array2<f64>, pac: usize) -> Array2<f64> {
    let (rows, width) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows * pac, width / pac))
        .expect("contiguous")
}

fn add_into(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Fits the mode-specific normalisation on `features`, then trains the
/// generator and critic on the encoded rows.
pub fn train_wgan_gp(features: &Array2<f64>, labels: &[u8], config: &GanConfig) -> Result<(GanModel, GanHistory), AugmentError> {
    config.validate()?;
    if features.nrows() != labels.len() {
        return Err(AugmentError::Dimension { got: labels.len(), expected: features.nrows() });
    }
    if labels.iter().any(|&l| l as usize >= N_CLASSES) {
        return Err(AugmentError::Config("labels must be 0 or 1".into()));
    }
    if features.nrows() < config.batch_size {
        return Err(AugmentError::TooFewRows { rows: features.nrows(), batch: config.batch_size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let transformer = MsnTransformer::fit(features, config.max_modes, config.nonnegative)?;
    let encoded = transformer.encode(features, &mut rng)?;
    let layout = transformer.layout();
    let width = transformer.encoded_width();
    let real_all = concatenate![Axis(1), encoded, one_hot(labels)];

    let mut generator = build_generator(config.noise_dim + N_CLASSES, &config.generator_hidden, width, &mut rng)?;
    let mut critic = build_critic(config.pac * (width + N_CLASSES), &config.critic_hidden, &mut rng)?;
    let mut g_opt = Adam::new(config.optimizer);
    let mut c_opt = Adam::new(config.optimizer);
    let n = features.nrows();
    let batch = config.batch_size;
    let packed_rows = (batch / config.pac) as f64;
    let steps = config.epochs * (n / batch).max(1);
    let mut history = GanHistory::default();

    let fake_batch = |generator: &mut NeuralNet, rng: &mut ChaCha8Rng, y: &[u8]| -> Result<(Array2<f64>, Array2<f64>), AugmentError> {
        let cond = one_hot(y);
        let z = concatenate![Axis(1), noise(rng, y.len(), config.noise_dim), cond];
        let raw = generator.forward(&z)?;
        let act = head_forward(&raw, &layout);
        Ok((concatenate![Axis(1), act, cond], act))
    };

    for _ in 0..steps {
        let mut critic_loss = 0.0;
        for _ in 0..config.critic_steps {
            let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
            let real = real_all.select(Axis(0), &idx);
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let (fake, _) = fake_batch(&mut generator, &mut rng, &y)?;
            let real_p = pack(&real, config.pac);
            let fake_p = pack(&fake, config.pac);

            let s_fake = critic.forward(&fake_p)?;
            let (mut grads, _) = critic.backward(&Array2::from_elem(s_fake.dim(), 1.0 / packed_rows))?;
            let s_real = critic.forward(&real_p)?;
            let (g_real, _) = critic.backward(&Array2::from_elem(s_real.dim(), -1.0 / packed_rows))?;
            add_into(&mut grads, &g_real);

            let eps: Array1<f64> = (0..real_p.nrows()).map(|_| rng.random::<f64>()).collect();
            let eps = eps.insert_axis(Axis(1));
            let interp = &real_p * &eps + &fake_p * &(1.0 - &eps);
            let (penalty, g_pen) = gradient_penalty(&critic, &interp, config.gp_lambda)?;
            add_into(&mut grads, &g_pen);

            let loss = s_fake.mean().unwrap_or(0.0) - s_real.mean().unwrap_or(0.0) + penalty;
            if !loss.is_finite() {
                return Err(AugmentError::Diverged { network: "critic", loss });
            }
            c_opt.step(&mut critic, &grads);
            critic_loss += loss;
        }

        let y: Vec<u8> = (0..batch).map(|_| labels[rng.random_range(0..n)]).collect();
        let (fake, act) = fake_batch(&mut generator, &mut rng, &y)?;
        let fake_p = pack(&fake, config.pac);
        let score = critic.forward(&fake_p)?;
        let loss = -score.mean().unwrap_or(0.0);
        if !loss.is_finite() {
            return Err(AugmentError::Diverged { network: "generator", loss });
        }
        let (_, dx) = critic.backward(&Array2::from_elem(score.dim(), -1.0 / packed_rows))?;
        let d_fake = unpack(&dx, config.pac);
        let d_act = d_fake.slice(s![.., ..width]).to_owned();
        let d_raw = head_backward(&act, &d_act, &layout);
        let (g_grads, _) = generator.backward(&d_raw)?;
        g_opt.step(&mut generator, &g_grads);

        history.critic_loss.push(critic_loss / config.critic_steps as f64);
        history.generator_loss.push(loss);
    }

    let prior_theft = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
    let class_prior = [1.0 - prior_theft, prior_theft];
    // Fix the generator's batch-norm statistics on a large batch of fresh noise.
    let calib_labels: Vec<u8> = (0..2048).map(|_| (rng.random::<f64>() < prior_theft) as u8).collect();
    let z = concatenate![Axis(1), noise(&mut rng, 2048, config.noise_dim), one_hot(&calib_labels)];
    generator.recalibrate_batchnorm(&z)?;
    generator.set_training(false);
    critic.set_training(false);

    Ok((
        GanModel {
            generator,
            critic,
            transformer,
            noise_dim: config.noise_dim,
            pac: config.pac,
            gp_lambda: config.gp_lambda,
            class_prior,
        },
        history,
    ))
}

impl GanModel {
    /// Generates rows of the given classes at the original feature scale.
    pub fn generate(&self, labels: &[u8], seed: u64) -> Result<Array2<f64>, AugmentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = self.transformer.layout();
        let mut out = Array2::zeros((labels.len(), self.transformer.n_columns()));
        for (chunk, lab) in labels.chunks(1024).enumerate() {
            let z = concatenate![Axis(1), noise(&mut rng, lab.len(), self.noise_dim), one_hot(lab)];
            let act = head_forward(&self.generator.predict(&z)?, &layout);
            let decoded = self.transformer.decode(&act)?;
            out.slice_mut(s![chunk * 1024..chunk * 1024 + lab.len(), ..]).assign(&decoded);
        }
        Ok(out)
    }
}

/// Draws `n_total` labelled rows split by `ratio` (genuine rows first).
pub fn sample_synthetic(model: &GanModel, n_total: usize, ratio: ClassRatio, seed: u64) -> Result<(Array2<f64>, Vec<u8>), AugmentError> {
    let (genuine, theft) = ratio.split(n_total);
    let labels: Vec<u8> = std::iter::repeat_n(0u8, genuine).chain(std::iter::repeat_n(1u8, theft)).collect();
    let rows = model.generate(&labels, seed)?;
    Ok((rows, labels))
}
