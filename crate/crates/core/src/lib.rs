pub mod augmentation;
pub mod autoencoder;
pub mod data;
pub mod ensemble;
pub mod imputation;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod pipeline;
