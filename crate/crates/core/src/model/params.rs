use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AttentionParams, FfnParams, NormParams, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::config::{KeyframeBridge, ModelConfig, NormMode};

/// How a parameter tensor starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform on `±1/√fan_in`.
    FanIn(usize),
    Ones,
    Zeros,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Every named tensor of a model plus the frozen position scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub pos_scale: f64,
    pub tensors: BTreeMap<String, Tensor>,
}

fn push(specs: &mut Vec<ParamSpec>, name: String, shape: Vec<usize>, init: Init) {
    specs.push(ParamSpec { name, shape, init });
}

fn linear_specs(specs: &mut Vec<ParamSpec>, prefix: &str, w: &str, b: &str, fan_in: usize, fan_out: usize) {
    push(specs, format!("{prefix}.{w}"), vec![fan_in, fan_out], Init::FanIn(fan_in));
    push(specs, format!("{prefix}.{b}"), vec![fan_out], Init::Zeros);
}

fn norm_specs(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize, mode: NormMode) {
    push(specs, format!("{prefix}.gain"), vec![d], Init::Ones);
    if mode == NormMode::LayerNorm {
        push(specs, format!("{prefix}.bias"), vec![d], Init::Zeros);
    }
}

fn ffn_specs(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize, hidden: usize) {
    linear_specs(specs, prefix, "w1", "b1", d, hidden);
    linear_specs(specs, prefix, "w2", "b2", hidden, d);
}

fn block_specs(specs: &mut Vec<ParamSpec>, prefix: &str, cfg: &ModelConfig) {
    let d = cfg.d_model;
    let attn = format!("{prefix}.attn");
    for (w, b) in [("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wo", "bo")] {
        linear_specs(specs, &attn, w, b, d, d);
    }
    norm_specs(specs, &format!("{prefix}.norm1"), d, cfg.norm_mode);
    norm_specs(specs, &format!("{prefix}.norm2"), d, cfg.norm_mode);
    ffn_specs(specs, &format!("{prefix}.ffn"), d, cfg.ffn_mult * d);
}

fn conv_specs(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    push(specs, format!("{prefix}.kernel"), vec![3, d, d], Init::FanIn(3 * d));
    push(specs, format!("{prefix}.bias"), vec![d], Init::Zeros);
}

/// Names, shapes and initializers of every parameter, in a fixed order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let mut specs = Vec::new();
    linear_specs(&mut specs, "stage1.embed", "w", "b", cfg.feature_width(), cfg.embed_width());
    for i in 0..cfg.layers_per_stage {
        block_specs(&mut specs, &format!("stage1.block{i}"), cfg);
    }
    for i in 0..cfg.layers_per_stage {
        block_specs(&mut specs, &format!("stage2.block{i}"), cfg);
    }
    match cfg.keyframe_bridge {
        KeyframeBridge::ContextTokens => ffn_specs(&mut specs, "bridge", d, cfg.ffn_mult * d),
        KeyframeBridge::SeparateEmbeddings => {
            linear_specs(&mut specs, "keyembed", "w", "b", cfg.feature_width(), cfg.embed_width())
        }
    }
    conv_specs(&mut specs, "stage3.conv_in", d);
    for i in 0..cfg.layers_per_stage {
        block_specs(&mut specs, &format!("stage3.block{i}"), cfg);
    }
    conv_specs(&mut specs, "stage3.conv_out", d);
    linear_specs(&mut specs, "stage3.head", "w", "b", d, cfg.output_width());
    specs
}

impl ModelParams {
    /// Seeded initialization with position scale 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in param_specs(&config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            tensors.insert(spec.name, Tensor::new(spec.shape, data)?);
        }
        Ok(Self {
            config,
            pos_scale: 1.0,
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Check names and shapes against the configuration.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.pos_scale.is_finite() && self.pos_scale > 0.0) {
            return Err(Error::Config(format!("pos_scale must be positive, got {}", self.pos_scale)));
        }
        let specs = param_specs(&self.config);
        if specs.len() != self.tensors.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for spec in specs {
            let t = self.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::shape("parameter", &spec.shape, t.shape()));
            }
        }
        Ok(())
    }

    /// Put every tensor on the tape, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect();
        Bound { vars, norm_mode: self.config.norm_mode }
    }
}

/// Parameters of one model placed on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
    norm_mode: NormMode,
}

impl Bound {
    /// Pair parameter names with existing tape variables.
    pub fn from_vars<I>(vars: I, norm_mode: NormMode) -> Self
    where
        I: IntoIterator<Item = (String, Var)>,
    {
        Self {
            vars: vars.into_iter().collect(),
            norm_mode,
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub(crate) fn linear(&self, prefix: &str) -> Result<(Var, Var)> {
        Ok((self.get(&format!("{prefix}.w"))?, self.get(&format!("{prefix}.b"))?))
    }

    pub(crate) fn attention(&self, prefix: &str) -> Result<AttentionParams> {
        let g = |n: &str| self.get(&format!("{prefix}.{n}"));
        Ok(AttentionParams {
            wq: g("wq")?,
            bq: g("bq")?,
            wk: g("wk")?,
            bk: g("bk")?,
            wv: g("wv")?,
            bv: g("bv")?,
            wo: g("wo")?,
            bo: g("bo")?,
        })
    }

    pub(crate) fn ffn(&self, prefix: &str) -> Result<FfnParams> {
        let g = |n: &str| self.get(&format!("{prefix}.{n}"));
        Ok(FfnParams {
            w1: g("w1")?,
            b1: g("b1")?,
            w2: g("w2")?,
            b2: g("b2")?,
        })
    }

    pub(crate) fn norm(&self, prefix: &str) -> Result<NormParams> {
        let gain = self.get(&format!("{prefix}.gain"))?;
        Ok(match self.norm_mode {
            NormMode::SeqRcRmsNorm => NormParams::Rms { gain },
            NormMode::LayerNorm => NormParams::Layer {
                gain,
                bias: self.get(&format!("{prefix}.bias"))?,
            },
        })
    }
}
