use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyper-parameters. `alphabet_size` counts the blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub alphabet_size: usize,
    pub conv_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 12,
            hidden_dim: 14,
            num_blocks: 2,
            alphabet_size: 13,
            conv_kernel: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.feature_dim", self.feature_dim),
            ("model.hidden_dim", self.hidden_dim),
            ("model.num_blocks", self.num_blocks),
            ("model.conv_kernel", self.conv_kernel),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.alphabet_size < 2 {
            return Err(Error::config("model.alphabet_size", "needs the blank plus at least one grapheme"));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::config("model.conv_kernel", "must be odd"));
        }
        Ok(())
    }

    /// Closed-form parameter count of the reference architecture.
    pub fn param_count(&self) -> usize {
        let (d, h, a, k) = (self.feature_dim, self.hidden_dim, self.alphabet_size, self.conv_kernel);
        let conv = h * d * k + h;
        let block = 2 * h * h + 2 * h + 2 * h;
        let head = a * h + a;
        conv + self.num_blocks * block + head
    }

    /// Count of weights eligible for pruning (conv and linear matrices).
    pub fn prunable_count(&self) -> usize {
        let (d, h, a, k) = (self.feature_dim, self.hidden_dim, self.alphabet_size, self.conv_kernel);
        h * d * k + self.num_blocks * 2 * h * h + a * h
    }
}

/// Shape of the learning-rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrShape {
    /// Linear warmup to the peak, then half-cosine decay to zero.
    #[default]
    WarmupCosine,
    /// `peak_lr` throughout; used for fine-tuning.
    Constant,
}

/// Optimization schedule. Epoch counts are whole epochs; the learning rate
/// is evaluated at fractional epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub total_epochs: u32,
    pub warmup_epochs: u32,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_frames_cap: usize,
    pub shape: LrShape,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_epochs: 40,
            warmup_epochs: 3,
            peak_lr: 3e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            batch_frames_cap: 600,
            shape: LrShape::WarmupCosine,
        }
    }
}

impl TrainSchedule {
    /// A longer schedule for larger models:
    /// 75 epochs, 5 warmup epochs, peak 6e-4, 2400 frames per batch.
    pub fn long_schedule() -> Self {
        Self {
            total_epochs: 75,
            warmup_epochs: 5,
            peak_lr: 6e-4,
            batch_frames_cap: 2400,
            ..Self::default()
        }
    }

    /// Constant-rate schedule sharing the optimizer settings of `self`.
    pub fn constant(&self, epochs: u32, lr: f64) -> Self {
        Self {
            total_epochs: epochs,
            warmup_epochs: 0,
            peak_lr: lr,
            shape: LrShape::Constant,
            ..self.clone()
        }
    }

    /// Warmup-cosine schedule of a different length sharing everything else.
    pub fn with_length(&self, epochs: u32) -> Self {
        Self {
            total_epochs: epochs,
            warmup_epochs: self.warmup_epochs.min(epochs.saturating_sub(1)),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::config("schedule.total_epochs", "must be positive"));
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::config("schedule.warmup_epochs", "must be smaller than total_epochs"));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::config("schedule.peak_lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("schedule.weight_decay", "must be non-negative"));
        }
        for (field, b) in [("schedule.beta1", self.beta1), ("schedule.beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(field, "must lie in (0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("schedule.eps", "must be positive"));
        }
        if self.batch_frames_cap == 0 {
            return Err(Error::config("schedule.batch_frames_cap", "must be positive"));
        }
        Ok(())
    }
}
