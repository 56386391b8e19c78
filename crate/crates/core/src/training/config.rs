use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization and sampling settings of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Optimizer steps; one step consumes one sampled batch.
    pub total_epochs: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: u64,
    pub alpha_g_ramp_epochs: u64,
    /// Inclusive window-length bracket, clamped to the shortest clip.
    pub clip_len_min: usize,
    pub clip_len_max: usize,
    /// Keyframe counts are drawn from `[⌊N/a⌋, ⌊N/b⌋]` for divisors `(a, b)`.
    pub keyframe_divisors: (usize, usize),
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 writes only the last.
    pub checkpoint_every: u64,
    /// Estimate the position scale from the untrained model before step 1.
    pub calibrate_pos_scale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_epochs: 2000,
            batch_size: 8,
            base_lr: 4e-4,
            warmup_epochs: 1000,
            alpha_g_ramp_epochs: 1000,
            clip_len_min: 72,
            clip_len_max: 144,
            keyframe_divisors: (24, 4),
            seed: 0,
            checkpoint_every: 500,
            calibrate_pos_scale: true,
        }
    }
}

impl TrainConfig {
    /// The schedule used at full scale: 50,000 steps of 64 clips.
    pub fn full_scale() -> Self {
        Self {
            total_epochs: 50_000,
            batch_size: 64,
            ..Self::default()
        }
    }

    /// Desk-scale schedule for the tiny model on a handful of clips: short
    /// warmup and ramp, and a base rate giving a peak step of about 1e−2.
    pub fn desk() -> Self {
        Self {
            total_epochs: 2000,
            batch_size: 8,
            base_lr: 0.1,
            warmup_epochs: 100,
            alpha_g_ramp_epochs: 100,
            clip_len_min: 120,
            clip_len_max: 120,
            checkpoint_every: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if self.total_epochs == 0 {
            return bad("total_epochs", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad("base_lr", "must be a positive number");
        }
        if self.warmup_epochs == 0 {
            return bad("warmup_epochs", "must be positive");
        }
        if self.alpha_g_ramp_epochs == 0 {
            return bad("alpha_g_ramp_epochs", "must be positive");
        }
        if self.clip_len_min < 2 || self.clip_len_max < self.clip_len_min {
            return bad("clip_len_min", "need 2 <= clip_len_min <= clip_len_max");
        }
        if self.keyframe_divisors.0 == 0 || self.keyframe_divisors.1 == 0 {
            return bad("keyframe_divisors", "must be positive");
        }
        Ok(())
    }
}
