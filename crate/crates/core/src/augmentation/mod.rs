//! Tabular synthesis: per-column Gaussian mixtures, mode-specific
//! normalisation and a packed WGAN-GP generator.

mod gan;
mod msn;
mod vgm;

pub use gan::{
    critic_input_gradient, gradient_penalty, pack, sample_synthetic, train_wgan_gp, unpack, GanConfig, GanHistory, GanModel, N_CLASSES,
};
pub use msn::{alpha_for, msn_decode, msn_encode, MsnTransformer, MsnValue, SCALE};
pub use vgm::{fit_vgm, ColumnModes, PRUNE_WEIGHT};

use serde::{Deserialize, Serialize};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("{values} values cannot support {modes} mixture modes")]
    TooFewValues { values: usize, modes: usize },
    #[error("encoded value has no valid mode indicator")]
    NoMode,
    #[error("width {got} does not match expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("need at least {batch} rows for one batch, got {rows}")]
    TooFewRows { rows: usize, batch: usize },
    #[error("{network} loss is not finite ({loss})")]
    Diverged { network: &'static str, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NnError),
}

/// Genuine-to-theft proportion of generated rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRatio {
    pub genuine: u32,
    pub theft: u32,
}

impl Default for ClassRatio {
    fn default() -> Self {
        Self { genuine: 2, theft: 1 }
    }
}

impl ClassRatio {
    /// `(genuine, theft)` counts: theft gets the floor of its share and the
    /// remainder goes to genuine.
    pub fn split(self, n_total: usize) -> (usize, usize) {
        let parts = (self.genuine + self.theft).max(1) as usize;
        let theft = n_total * self.theft as usize / parts;
        (n_total - theft, theft)
    }
}

impl std::str::FromStr for ClassRatio {
    type Err = String;

    /// Parses `"genuine:theft"`, e.g. `"2:1"`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected genuine:theft, got {s:?}"))?;
        let genuine = a.trim().parse().map_err(|_| format!("bad genuine part {a:?}"))?;
        let theft = b.trim().parse().map_err(|_| format!("bad theft part {b:?}"))?;
        if genuine == 0 && theft == 0 {
            return Err("ratio cannot be 0:0".into());
        }
        Ok(Self { genuine, theft })
    }
}
