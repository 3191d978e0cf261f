use serde::{Deserialize, Serialize};

use crate::attention::{
    slope_schedule, Activation, AttentionConfig, RopeParams, SlopeMode, SlopeSchedule,
};
use crate::error::{ensure, Error, Result};
use crate::Scalar;

/// Where positional information enters attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosMode {
    Rope,
    Alibi,
    /// Linear distance bias and rotary embedding in the same score.
    Alirope,
    /// No positional signal at all (ablation control).
    None,
}

impl PosMode {
    pub fn uses_rope(self) -> bool {
        matches!(self, PosMode::Rope | PosMode::Alirope)
    }

    pub fn uses_bias(self) -> bool {
        matches!(self, PosMode::Alibi | PosMode::Alirope)
    }
}

fn default_norm_eps() -> f64 {
    1e-5
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Training attention window ω.
    pub window: usize,
    pub activation: Activation,
    pub pos_mode: PosMode,
    pub slope_mode: SlopeMode,
    pub rope_theta: f64,
    pub mlp_ratio: f64,
    pub seed: u64,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    /// Multiply sigmoid attention weights by 1/ω. Off by default.
    #[serde(default)]
    pub sigmoid_window_scale: bool,
}

impl ModelConfig {
    /// A small configuration for tests and gradient checks.
    pub fn toy() -> Self {
        Self {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            window: 3,
            activation: Activation::Sigmoid,
            pos_mode: PosMode::Alirope,
            slope_mode: SlopeMode::Balanced,
            rope_theta: 10_000.0,
            mlp_ratio: 2.0,
            seed: 0,
            norm_eps: default_norm_eps(),
            sigmoid_window_scale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.vocab_size >= 1, Config, "vocab_size must be positive");
        ensure!(self.n_heads >= 1, Config, "n_heads must be positive");
        ensure!(self.d_model >= 1, Config, "d_model must be positive");
        ensure!(
            self.d_model % self.n_heads == 0,
            Config,
            "d_model {} is not divisible by n_heads {}",
            self.d_model,
            self.n_heads
        );
        ensure!(self.window >= 1, Config, "window must be at least 1");
        ensure!(self.n_layers >= 1, Config, "n_layers must be at least 1");
        ensure!(
            self.mlp_ratio > 0.0 && self.mlp_hidden() >= 1,
            Config,
            "mlp_ratio must give a positive hidden width"
        );
        ensure!(self.norm_eps > 0.0, Config, "norm_eps must be positive");
        if self.pos_mode.uses_bias() {
            ensure!(
                self.slope_mode != SlopeMode::None,
                Config,
                "pos_mode {:?} requires a slope_mode other than none",
                self.pos_mode
            );
        } else {
            ensure!(
                self.slope_mode == SlopeMode::None,
                Config,
                "slope_mode {:?} has no effect with pos_mode {:?}; use none",
                self.slope_mode,
                self.pos_mode
            );
        }
        if self.pos_mode.uses_rope() {
            RopeParams::new(self.head_dim(), self.rope_theta)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.slope_schedule()?;
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.d_model as f64).round() as usize
    }

    pub fn slope_schedule(&self) -> Result<Option<SlopeSchedule>> {
        if !self.pos_mode.uses_bias() {
            return Ok(None);
        }
        slope_schedule(self.n_heads, self.slope_mode).map(Some)
    }

    pub fn rope_params(&self) -> Option<RopeParams> {
        self.pos_mode.uses_rope().then_some(RopeParams {
            head_dim: self.head_dim(),
            theta: self.rope_theta,
        })
    }

    /// Attention settings for an evaluation window (which may differ from
    /// the training window).
    pub fn attention_config<T: Scalar>(&self, window: usize) -> Result<AttentionConfig<T>> {
        let slopes = self
            .slope_schedule()?
            .map(|s| s.slopes.iter().map(|&x| T::of(x)).collect());
        let weight_scale = (self.sigmoid_window_scale && self.activation == Activation::Sigmoid)
            .then(|| T::one() / T::from_usize(self.window).unwrap());
        Ok(AttentionConfig {
            activation: self.activation,
            window,
            slopes,
            rope: self.rope_params(),
            weight_scale,
        })
    }

    /// Closed-form parameter count:
    /// `2·V·d + d + L·(2d + 4d² + 3·d·f)` with `f` the MLP hidden width.
    pub fn param_count(&self) -> usize {
        let (v, d, l, f) = (
            self.vocab_size,
            self.d_model,
            self.n_layers,
            self.mlp_hidden(),
        );
        2 * v * d + d + l * (2 * d + 4 * d * d + 3 * d * f)
    }

    /// `false` for ablation settings that have no counterpart in the
    /// published experiments (currently `pos_mode = none`).
    pub fn is_published_variant(&self) -> bool {
        self.pos_mode != PosMode::None
    }
}

/// Receptive field `1 + (ω−1)·l` of a token after `layer` attention layers.
pub fn receptive_field(layer: usize, window: usize) -> usize {
    1 + window.saturating_sub(1) * layer
}
