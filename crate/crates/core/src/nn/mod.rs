//! A small feed-forward network engine: dense layers, batch normalisation,
//! ReLU and sigmoid activations, three losses, an Adam optimiser and a
//! finite-difference gradient checker.
//!
//! Dense weights are stored `in_dim x out_dim` so a batch `X` (rows are
//! samples) maps to `X W + b`.

mod gradcheck;
mod loss;
mod optim;
mod persist;

pub use gradcheck::{gradient_check, max_relative_error, relative_error};
pub use loss::Loss;
pub use optim::{Adam, AdamConfig};
pub use persist::{NetDocument, NET_SCHEMA_VERSION};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("batch normalisation in training mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("backward called before forward")]
    NoForwardCache,
    #[error("loss is not finite ({0})")]
    Divergence(f64),
    #[error("unsupported model document: {0}")]
    Document(String),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((in_dim, out_dim), || rng.random_range(-limit..=limit)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn inference(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let scale = &self.gamma * &inv_std;
        let shift = &self.beta - &(&self.running_mean * &scale);
        (x * &scale + &shift, inv_std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
    Sigmoid,
}

impl Layer {
    /// Trainable plus non-trainable parameter count. Batch normalisation
    /// counts scale, shift, running mean and running variance.
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.in_dim() * d.out_dim() + d.out_dim(),
            Layer::BatchNorm(b) => 4 * b.dim(),
            Layer::Relu | Layer::Sigmoid => 0,
        }
    }

    pub fn trainable_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.in_dim() * d.out_dim() + d.out_dim(),
            Layer::BatchNorm(b) => 2 * b.dim(),
            Layer::Relu | Layer::Sigmoid => 0,
        }
    }

    /// `(in_dim, out_dim)` for layers that fix a width.
    fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Dense(d) => Some((d.in_dim(), d.out_dim())),
            Layer::BatchNorm(b) => Some((b.dim(), b.dim())),
            Layer::Relu | Layer::Sigmoid => None,
        }
    }
}

/// Intermediate values kept by a training-mode forward pass.
#[derive(Debug, Clone)]
enum Cache {
    Dense { input: Array2<f64> },
    BatchNorm { x_hat: Array2<f64>, inv_std: Array1<f64>, batch_stats: bool },
    Relu { input: Array2<f64> },
    Sigmoid { output: Array2<f64> },
}

/// Gradients of every trainable parameter, in `NeuralNet::params` order.
pub type Gradients = Vec<Vec<f64>>;

/// An ordered stack of layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "NetDocument", try_from = "NetDocument")]
pub struct NeuralNet {
    layers: Vec<Layer>,
    training: bool,
    cache: Option<Vec<Cache>>,
}

impl PartialEq for NeuralNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.training == other.training
    }
}

impl NeuralNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            if let Some((input, output)) = layer.dims() {
                if let Some(w) = width {
                    if w != input {
                        return Err(NnError::Dimension(format!(
                            "layer {i} expects width {input} but receives {w}"
                        )));
                    }
                }
                width = Some(output);
            }
        }
        Ok(Self {
            layers,
            training: true,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| l.dims()).map(|d| d.0)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| l.dims()).map(|d| d.1)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Training mode normalises with batch statistics and updates the running
    /// ones; inference mode uses the running statistics.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn trainable_params(&self) -> usize {
        self.layers.iter().map(Layer::trainable_count).sum()
    }

    /// Mutable views of every trainable parameter: dense weight then bias,
    /// batch-norm scale then shift.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("contiguous"));
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_slice_mut().expect("contiguous"));
                    out.push(b.beta.as_slice_mut().expect("contiguous"));
                }
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("contiguous"));
                }
                Layer::BatchNorm(b) => {
                    out.push(b.gamma.as_slice().expect("contiguous"));
                    out.push(b.beta.as_slice().expect("contiguous"));
                }
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if let Some(d) = self.input_dim() {
            if x.ncols() != d {
                return Err(NnError::Dimension(format!("input has {} columns, network expects {d}", x.ncols())));
            }
        }
        Ok(())
    }

    /// Forward pass that records the intermediates needed by `backward`.
    pub fn forward(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let training = self.training;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let out = h.dot(&d.weight) + &d.bias;
                    caches.push(Cache::Dense { input: h });
                    out
                }
                Layer::BatchNorm(b) if training => {
                    let n = h.nrows();
                    if n < 2 {
                        return Err(NnError::BatchTooSmall(n));
                    }
                    let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &h - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    let inv_std = var.mapv(|v| 1.0 / (v + b.epsilon).sqrt());
                    let x_hat = &centered * &inv_std;
                    let out = &x_hat * &b.gamma + &b.beta;
                    let unbiased = &var * (n as f64 / (n as f64 - 1.0));
                    b.running_mean = &b.running_mean * b.momentum + &mean * (1.0 - b.momentum);
                    b.running_var = &b.running_var * b.momentum + &unbiased * (1.0 - b.momentum);
                    caches.push(Cache::BatchNorm { x_hat, inv_std, batch_stats: true });
                    out
                }
                Layer::BatchNorm(b) => {
                    let inv_std = b.running_var.mapv(|v| 1.0 / (v + b.epsilon).sqrt());
                    let x_hat = (&h - &b.running_mean) * &inv_std;
                    let out = &x_hat * &b.gamma + &b.beta;
                    caches.push(Cache::BatchNorm { x_hat, inv_std, batch_stats: false });
                    out
                }
                Layer::Relu => {
                    let out = h.mapv(|v| v.max(0.0));
                    caches.push(Cache::Relu { input: h });
                    out
                }
                Layer::Sigmoid => {
                    let out = h.mapv(sigmoid);
                    caches.push(Cache::Sigmoid { output: out.clone() });
                    out
                }
            };
        }
        self.cache = Some(caches);
        Ok(h)
    }

    /// Inference-mode pass; never touches running statistics or caches.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => h.dot(&d.weight) + &d.bias,
                Layer::BatchNorm(b) => b.inference(&h).0,
                Layer::Relu => h.mapv(|v| v.max(0.0)),
                Layer::Sigmoid => h.mapv(sigmoid),
            };
        }
        Ok(h)
    }

    /// Back-propagates `grad_out` (d loss / d output) through the cached
    /// forward pass. Returns parameter gradients and d loss / d input.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let caches = self.cache.take().ok_or(NnError::NoForwardCache)?;
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(&caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    let dw = input.t().dot(&g);
                    let db = g.sum_axis(Axis(0));
                    grads_rev.push(db.to_vec());
                    grads_rev.push(dw.as_standard_layout().iter().copied().collect());
                    g.dot(&d.weight.t())
                }
                (Layer::BatchNorm(b), Cache::BatchNorm { x_hat, inv_std, batch_stats }) => {
                    if *batch_stats {
                        let n = g.nrows() as f64;
                        let dgamma = (&g * x_hat).sum_axis(Axis(0));
                        let dbeta = g.sum_axis(Axis(0));
                        let dx_hat = &g * &b.gamma;
                        let sum_dx_hat = dx_hat.sum_axis(Axis(0));
                        let sum_dx_hat_xhat = (&dx_hat * x_hat).sum_axis(Axis(0));
                        let dx = (&dx_hat * n - &sum_dx_hat - &(x_hat * &sum_dx_hat_xhat)) * &(inv_std / n);
                        grads_rev.push(dbeta.to_vec());
                        grads_rev.push(dgamma.to_vec());
                        dx
                    } else {
                        // Running statistics are constants here.
                        grads_rev.push(g.sum_axis(Axis(0)).to_vec());
                        grads_rev.push((&g * x_hat).sum_axis(Axis(0)).to_vec());
                        &g * &(&b.gamma * inv_std)
                    }
                }
                (Layer::Relu, Cache::Relu { input }) => {
                    let mut out = g;
                    out.zip_mut_with(input, |gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0
                        }
                    });
                    out
                }
                (Layer::Sigmoid, Cache::Sigmoid { output }) => {
                    let mut out = g;
                    out.zip_mut_with(output, |gv, &s| *gv *= s * (1.0 - s));
                    out
                }
                _ => unreachable!("cache out of step with layers"),
            };
        }
        grads_rev.reverse();
        Ok((grads_rev, g))
    }

    /// Sets every batch-norm layer's running statistics to the exact
    /// population statistics of `data` propagated through the network.
    pub fn recalibrate_batchnorm(&mut self, data: &Array2<f64>) -> Result<()> {
        self.check_input(data)?;
        let mut h = data.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Dense(d) => h.dot(&d.weight) + &d.bias,
                Layer::BatchNorm(b) => {
                    if h.nrows() > 0 {
                        let mean = h.mean_axis(Axis(0)).expect("non-empty");
                        let var = (&h - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
                        b.running_mean = mean;
                        b.running_var = var;
                    }
                    b.inference(&h).0
                }
                Layer::Relu => h.mapv(|v| v.max(0.0)),
                Layer::Sigmoid => h.mapv(sigmoid),
            };
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One forward/backward/update cycle. Returns the loss before the update.
pub fn train_step(net: &mut NeuralNet, opt: &mut Adam, batch: &Array2<f64>, targets: &Array2<f64>, loss: Loss) -> Result<f64> {
    let out = net.forward(batch)?;
    if out.dim() != targets.dim() {
        return Err(NnError::Dimension(format!("output {:?} vs targets {:?}", out.dim(), targets.dim())));
    }
    let value = loss.value(&out, targets);
    if !value.is_finite() {
        return Err(NnError::Divergence(value));
    }
    let (grads, _) = net.backward(&loss.gradient(&out, targets))?;
    opt.step(net, &grads);
    Ok(value)
}
