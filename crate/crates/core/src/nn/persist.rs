//! JSON form of a network. Parameter arrays are stored as base64 of their
//! little-endian `f64` bytes so a save/load round trip is bit-exact.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{BatchNorm, Dense, Layer, NeuralNet, NnError};

pub const NET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDocument {
    pub schema_version: u32,
    pub training: bool,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerDocument {
    Dense {
        in_dim: usize,
        out_dim: usize,
        #[serde(with = "b64")]
        weight: Vec<f64>,
        #[serde(with = "b64")]
        bias: Vec<f64>,
    },
    BatchNorm {
        dim: usize,
        momentum: f64,
        epsilon: f64,
        #[serde(with = "b64")]
        gamma: Vec<f64>,
        #[serde(with = "b64")]
        beta: Vec<f64>,
        #[serde(with = "b64")]
        running_mean: Vec<f64>,
        #[serde(with = "b64")]
        running_var: Vec<f64>,
    },
    Relu,
    Sigmoid,
}

mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("byte length is not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl From<NeuralNet> for NetDocument {
    fn from(net: NeuralNet) -> Self {
        let training = net.training;
        let layers = net
            .into_layers()
            .into_iter()
            .map(|layer| match layer {
                Layer::Dense(d) => LayerDocument::Dense {
                    in_dim: d.in_dim(),
                    out_dim: d.out_dim(),
                    weight: d.weight.as_standard_layout().iter().copied().collect(),
                    bias: d.bias.to_vec(),
                },
                Layer::BatchNorm(b) => LayerDocument::BatchNorm {
                    dim: b.dim(),
                    momentum: b.momentum,
                    epsilon: b.epsilon,
                    gamma: b.gamma.to_vec(),
                    beta: b.beta.to_vec(),
                    running_mean: b.running_mean.to_vec(),
                    running_var: b.running_var.to_vec(),
                },
                Layer::Relu => LayerDocument::Relu,
                Layer::Sigmoid => LayerDocument::Sigmoid,
            })
            .collect();
        NetDocument {
            schema_version: NET_SCHEMA_VERSION,
            training,
            layers,
        }
    }
}

fn vector(values: Vec<f64>, dim: usize, what: &str) -> Result<Array1<f64>, NnError> {
    if values.len() != dim {
        return Err(NnError::Document(format!("{what} has {} values, expected {dim}", values.len())));
    }
    Ok(Array1::from(values))
}

impl TryFrom<NetDocument> for NeuralNet {
    type Error = NnError;

    fn try_from(doc: NetDocument) -> Result<Self, NnError> {
        if doc.schema_version != NET_SCHEMA_VERSION {
            return Err(NnError::Document(format!(
                "schema version {} (this build reads {NET_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for layer in doc.layers {
            layers.push(match layer {
                LayerDocument::Dense { in_dim, out_dim, weight, bias } => Layer::Dense(Dense {
                    weight: Array2::from_shape_vec((in_dim, out_dim), weight)
                        .map_err(|e| NnError::Document(format!("dense weight: {e}")))?,
                    bias: vector(bias, out_dim, "dense bias")?,
                }),
                LayerDocument::BatchNorm {
                    dim,
                    momentum,
                    epsilon,
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => Layer::BatchNorm(BatchNorm {
                    gamma: vector(gamma, dim, "gamma")?,
                    beta: vector(beta, dim, "beta")?,
                    running_mean: vector(running_mean, dim, "running mean")?,
                    running_var: vector(running_var, dim, "running variance")?,
                    momentum,
                    epsilon,
                }),
                LayerDocument::Relu => Layer::Relu,
                LayerDocument::Sigmoid => Layer::Sigmoid,
            });
        }
        let mut net = NeuralNet::new(layers)?;
        net.set_training(doc.training);
        Ok(net)
    }
}
