use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// RMSNorm inside the transformers; re-centering happens once, per
    /// sequence, on the keyframe root positions.
    #[default]
    SeqRcRmsNorm,
    LayerNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PeMode {
    /// Pose embedding of width `d_model − n_pe` with the code appended.
    #[default]
    Concat,
    /// Pose embedding of width `d_model` with a `d_model`-wide code added.
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KeyframeBridge {
    /// Keyframe rows of the manifold are an FFN of the keyframe context tokens.
    #[default]
    ContextTokens,
    /// Keyframe rows come from a separately learned embedding of the poses.
    SeparateEmbeddings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    #[serde(default = "default_n_pe")]
    pub n_pe: usize,
    #[serde(default = "default_layers")]
    pub layers_per_stage: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_ffn_mult")]
    pub ffn_mult: usize,
    #[serde(default)]
    pub norm_mode: NormMode,
    #[serde(default)]
    pub pe_mode: PeMode,
    #[serde(default)]
    pub keyframe_bridge: KeyframeBridge,
    pub joints: usize,
}

fn default_n_pe() -> usize {
    16
}
fn default_layers() -> usize {
    8
}
fn default_heads() -> usize {
    8
}
fn default_ffn_mult() -> usize {
    4
}

impl ModelConfig {
    /// Full-scale setting: d = 512, 8 layers per stage, 8 heads, FFN 4d.
    pub fn full(joints: usize) -> Self {
        Self {
            d_model: 512,
            n_pe: 16,
            layers_per_stage: 8,
            heads: 8,
            ffn_mult: 4,
            norm_mode: NormMode::default(),
            pe_mode: PeMode::default(),
            keyframe_bridge: KeyframeBridge::default(),
            joints,
        }
    }

    /// The small setting used by gradient checks and desk-scale training.
    pub fn tiny(joints: usize) -> Self {
        Self {
            d_model: 16,
            n_pe: 4,
            layers_per_stage: 2,
            heads: 2,
            ..Self::full(joints)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model ({}) must be a positive multiple of heads ({})",
                self.d_model, self.heads
            )));
        }
        if self.n_pe == 0 || self.n_pe % 2 != 0 {
            return Err(Error::Config(format!("n_pe must be positive and even, got {}", self.n_pe)));
        }
        if self.pe_mode == PeMode::Concat && self.n_pe >= self.d_model {
            return Err(Error::Config(format!(
                "n_pe ({}) must be smaller than d_model ({}) when concatenating",
                self.n_pe, self.d_model
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::Config("d_model must be even for sinusoidal queries".into()));
        }
        if self.layers_per_stage == 0 || self.ffn_mult == 0 {
            return Err(Error::Config("layers_per_stage and ffn_mult must be positive".into()));
        }
        if self.joints == 0 {
            return Err(Error::Config("joints must be positive".into()));
        }
        Ok(())
    }

    /// Width of one keyframe feature row: 3 position + 4 rotation values per joint.
    pub fn feature_width(&self) -> usize {
        7 * self.joints
    }

    /// Width of the pose embedding before the positional code is attached.
    pub fn embed_width(&self) -> usize {
        match self.pe_mode {
            PeMode::Concat => self.d_model - self.n_pe,
            PeMode::Additive => self.d_model,
        }
    }

    pub fn output_width(&self) -> usize {
        3 + 4 * self.joints
    }
}
