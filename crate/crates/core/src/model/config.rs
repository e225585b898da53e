use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::numerics::PoolKind;

/// How history deltas enter the recurrent gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaTransform {
    /// `delta / delta_scale`.
    Raw,
    /// `1 / ln(e + delta)`.
    LogDecay,
}

/// Temporal mode runs the recurrent encoder over ordered histories; static
/// mode uses the gathered embeddings directly as features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    Temporal,
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Long-term embedding dimension.
    pub d: usize,
    /// Recurrent state dimension, which is also the short-term embedding size.
    pub hidden: usize,
    /// History length.
    pub k: usize,
    pub delta_transform: DeltaTransform,
    pub pooling: PoolKind,
    /// Learn a bilinear alignment matrix instead of the identity.
    pub use_theta: bool,
    pub mode: EncoderMode,
    /// Divisor applied to raw deltas; usually the mean per-entity gap of the training split.
    pub delta_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 32,
            hidden: 32,
            k: 5,
            delta_transform: DeltaTransform::Raw,
            pooling: PoolKind::Max,
            use_theta: false,
            mode: EncoderMode::Temporal,
            delta_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.k == 0 {
            return Err(Error::Config(format!(
                "d, hidden and k must be at least 1 (got {}, {}, {})",
                self.d, self.hidden, self.k
            )));
        }
        if self.mode == EncoderMode::Static && self.hidden != self.d {
            return Err(Error::Config("static mode requires hidden == d".into()));
        }
        if !(self.delta_scale.is_finite() && self.delta_scale > 0.0) {
            return Err(Error::Config(format!("delta_scale must be positive, got {}", self.delta_scale)));
        }
        Ok(())
    }

    /// The value fed to the delta weights for an elapsed time `delta`.
    pub fn transform_delta(&self, delta: f64) -> f64 {
        match self.delta_transform {
            DeltaTransform::Raw => delta / self.delta_scale,
            DeltaTransform::LogDecay => 1.0 / (std::f64::consts::E + delta).ln(),
        }
    }
}
