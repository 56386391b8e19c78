use std::path::{Path, PathBuf};

use keyloom_core::training::TrainConfig;
use keyloom_core::{KeyframeBridge, ModelConfig, NormMode, PeMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// JSON schema of [`RunConfig`].
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../schema/run_config.schema.json");

/// Resolved configuration written next to the outputs of every run.
pub const RESOLVED_CONFIG: &str = "run_config.json";

/// Model settings; `joints` is taken from the dataset when omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub d_model: usize,
    pub n_pe: usize,
    pub layers_per_stage: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub norm_mode: NormMode,
    pub pe_mode: PeMode,
    pub keyframe_bridge: KeyframeBridge,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self::from_config(&ModelConfig::tiny(1), None)
    }
}

impl ModelSettings {
    pub fn from_config(c: &ModelConfig, joints: Option<usize>) -> Self {
        Self {
            d_model: c.d_model,
            n_pe: c.n_pe,
            layers_per_stage: c.layers_per_stage,
            heads: c.heads,
            ffn_mult: c.ffn_mult,
            norm_mode: c.norm_mode,
            pe_mode: c.pe_mode,
            keyframe_bridge: c.keyframe_bridge,
            joints,
        }
    }

    pub fn resolve(&self, dataset_joints: usize) -> CliResult<ModelConfig> {
        if let Some(j) = self.joints {
            if j != dataset_joints {
                return Err(CliError::user(format!(
                    "model.joints: config says {j}, dataset skeleton has {dataset_joints}"
                )));
            }
        }
        let c = ModelConfig {
            d_model: self.d_model,
            n_pe: self.n_pe,
            layers_per_stage: self.layers_per_stage,
            heads: self.heads,
            ffn_mult: self.ffn_mult,
            norm_mode: self.norm_mode,
            pe_mode: self.pe_mode,
            keyframe_bridge: self.keyframe_bridge,
            joints: dataset_joints,
        };
        c.validate().map_err(|e| CliError::user(format!("model: {e}")))?;
        Ok(c)
    }
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    /// Clip files (`.klm`, `.bvh`) or directories of them.
    pub dataset: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Overrides `train.seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Parse JSON; relative paths are taken relative to `base`.
    pub fn from_json(text: &str, base: &Path) -> CliResult<Self> {
        let mut c: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::user(format!("run config: {e}")))?;
        for p in c.dataset.iter_mut().chain(std::iter::once(&mut c.output_dir)) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
    }

    /// Apply the seed override and check fields that do not need the data.
    pub fn validate(&mut self) -> CliResult<()> {
        if let Some(s) = self.seed {
            self.train.seed = s;
        }
        self.train.validate().map_err(|e| CliError::user(format!("train.{}", strip_kind(&e.to_string()))))?;
        if self.dataset.is_empty() {
            return Err(CliError::user("dataset: at least one path is required"));
        }
        if let Some(p) = self.dataset.iter().find(|p| !p.exists()) {
            return Err(CliError::user(format!("dataset: path does not exist: {}", p.display())));
        }
        Ok(())
    }
}

fn strip_kind(msg: &str) -> &str {
    msg.strip_prefix("configuration error: ").unwrap_or(msg)
}
