use crate::autodiff::{ffn, linear, multi_head_attention, norm, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::config::{KeyframeBridge, ModelConfig, PeMode};
use super::params::Bound;
use super::positional::positional_rows;

/// Frame indices with one `d_model`-wide token per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub times: Vec<usize>,
    pub tokens: Tensor,
}

impl TokenSequence {
    pub fn new(times: Vec<usize>, tokens: Tensor) -> Result<Self> {
        if tokens.shape().len() != 2 || tokens.rows() != times.len() {
            return Err(Error::shape("token sequence", &[times.len()], tokens.shape()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("token times must be strictly increasing".into()));
        }
        Ok(Self { times, tokens })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn pe_constant(tape: &mut Tape, times: &[usize], width: usize) -> Result<Var> {
    let t = Tensor::matrix(times.len(), width, positional_rows(times, width))?;
    Ok(tape.constant(t))
}

/// Pose embedding with the time code attached: `x·W + b ⊕ PE(t)` in concat
/// mode, `x·W + b + PE(t)` in additive mode.
fn embed_with_time(
    tape: &mut Tape,
    p: &Bound,
    cfg: &ModelConfig,
    prefix: &str,
    features: Var,
    times: &[usize],
) -> Result<Var> {
    let (w, b) = p.linear(prefix)?;
    let e = linear(tape, features, w, b)?;
    match cfg.pe_mode {
        PeMode::Concat => {
            let pe = pe_constant(tape, times, cfg.n_pe)?;
            tape.concat_cols(&[e, pe])
        }
        PeMode::Additive => {
            let pe = pe_constant(tape, times, cfg.d_model)?;
            tape.add(e, pe)
        }
    }
}

/// Pre-norm attention block: `x + Attn(norm(x), kv)` then `x + FFN(norm(x))`.
/// `kv = None` makes it self-attention.
fn block(tape: &mut Tape, p: &Bound, cfg: &ModelConfig, prefix: &str, x: Var, kv: Option<Var>) -> Result<Var> {
    let h = norm(tape, x, &p.norm(&format!("{prefix}.norm1"))?)?;
    let src = kv.unwrap_or(h);
    let a = multi_head_attention(tape, h, src, src, cfg.heads, &p.attention(&format!("{prefix}.attn"))?)?;
    let x = tape.add(x, a)?;
    let h = norm(tape, x, &p.norm(&format!("{prefix}.norm2"))?)?;
    let f = ffn(tape, h, &p.ffn(&format!("{prefix}.ffn"))?)?;
    tape.add(x, f)
}

fn check_features(tape: &Tape, cfg: &ModelConfig, features: Var, times: &[usize]) -> Result<()> {
    let shape = tape.shape(features);
    if shape.len() != 2 || shape[0] != times.len() || shape[1] != cfg.feature_width() {
        return Err(Error::shape(
            "keyframe features",
            &[times.len(), cfg.feature_width()],
            shape,
        ));
    }
    Ok(())
}

/// Keyframe encoder: embeds `K × 7J` features at `times` into `K × d` context tokens.
pub fn stage1_encode(tape: &mut Tape, p: &Bound, cfg: &ModelConfig, features: Var, times: &[usize]) -> Result<Var> {
    cfg.validate()?;
    check_features(tape, cfg, features, times)?;
    let mut x = embed_with_time(tape, p, cfg, "stage1.embed", features, times)?;
    for i in 0..cfg.layers_per_stage {
        x = block(tape, p, cfg, &format!("stage1.block{i}"), x, None)?;
    }
    Ok(x)
}

/// Intermediate-token generator.
///
/// Each target frame starts from its `d_model`-wide time code and only ever
/// attends into the context tokens, so every output row depends on its own
/// frame index and the context alone. Returns `None` when there are no targets.
pub fn stage2_generate(
    tape: &mut Tape,
    p: &Bound,
    cfg: &ModelConfig,
    phi_key: Var,
    key_times: &[usize],
    targets: &[usize],
) -> Result<Option<Var>> {
    if let Some(t) = targets.iter().find(|t| key_times.contains(t)) {
        return Err(Error::Contract(format!("target frame {t} is also a keyframe")));
    }
    if targets.is_empty() {
        return Ok(None);
    }
    let mut q = pe_constant(tape, targets, cfg.d_model)?;
    for i in 0..cfg.layers_per_stage {
        q = block(tape, p, cfg, &format!("stage2.block{i}"), q, Some(phi_key))?;
    }
    Ok(Some(q))
}

/// Keyframe rows of the manifold, as configured: an FFN of the context
/// tokens, or a separate embedding of the raw keyframe features.
pub fn keyframe_bridge(
    tape: &mut Tape,
    p: &Bound,
    cfg: &ModelConfig,
    phi_key: Var,
    features: Var,
    key_times: &[usize],
) -> Result<Var> {
    match cfg.keyframe_bridge {
        KeyframeBridge::ContextTokens => ffn(tape, phi_key, &p.ffn("bridge")?),
        KeyframeBridge::SeparateEmbeddings => embed_with_time(tape, p, cfg, "keyembed", features, key_times),
    }
}

/// Assemble the `n`-row manifold: bridged keyframe rows at `key_times`,
/// intermediate tokens at `targets`.
pub fn inject_tokens<B>(
    tape: &mut Tape,
    phi_key: Var,
    key_times: &[usize],
    intermediates: Option<Var>,
    targets: &[usize],
    n: usize,
    bridge: B,
) -> Result<Var>
where
    B: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut seen = vec![false; n];
    for &t in key_times.iter().chain(targets) {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(Error::Contract(format!(
                "keyframe and target frames must partition 0..{n}; frame {t} is out of range or repeated"
            )));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Contract(format!("keyframe and target frames do not cover 0..{n}")));
    }
    let key_rows = bridge(tape, phi_key)?;
    let keys = tape.scatter_rows(key_rows, key_times, n)?;
    match intermediates {
        Some(m) => {
            let imd = tape.scatter_rows(m, targets, n)?;
            tape.add(keys, imd)
        }
        None if targets.is_empty() => Ok(keys),
        None => Err(Error::Contract("intermediate tokens missing for non-empty targets".into())),
    }
}

/// Synthesizer: conv → attention blocks → conv → linear head. Returns
/// normalized root positions `N × 3` and raw quaternions `N × 4J`.
pub fn stage3_synthesize(tape: &mut Tape, p: &Bound, cfg: &ModelConfig, manifold: Var) -> Result<(Var, Var)> {
    let mut x = tape.conv1d(manifold, p.get("stage3.conv_in.kernel")?, p.get("stage3.conv_in.bias")?)?;
    for i in 0..cfg.layers_per_stage {
        x = block(tape, p, cfg, &format!("stage3.block{i}"), x, None)?;
    }
    let x = tape.conv1d(x, p.get("stage3.conv_out.kernel")?, p.get("stage3.conv_out.bias")?)?;
    let (w, b) = p.linear("stage3.head")?;
    let y = linear(tape, x, w, b)?;
    let roots = tape.slice_cols(y, 0, 3)?;
    let quats = tape.slice_cols(y, 3, 4 * cfg.joints)?;
    Ok((roots, quats))
}

/// Every intermediate value of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub phi_key: Var,
    pub intermediates: Option<Var>,
    pub manifold: Var,
    pub roots: Var,
    pub quats_raw: Var,
}

/// Run all three stages on normalized keyframe features.
pub fn forward(
    tape: &mut Tape,
    p: &Bound,
    cfg: &ModelConfig,
    features: Var,
    key_times: &[usize],
    n: usize,
) -> Result<Forward> {
    if key_times.len() < 2 || key_times.windows(2).any(|w| w[0] >= w[1]) || key_times.last() >= Some(&n) {
        return Err(Error::Contract(format!("invalid keyframe times {key_times:?} for {n} frames")));
    }
    let targets: Vec<usize> = (0..n).filter(|t| key_times.binary_search(t).is_err()).collect();
    let phi_key = stage1_encode(tape, p, cfg, features, key_times)?;
    let intermediates = stage2_generate(tape, p, cfg, phi_key, key_times, &targets)?;
    let manifold = inject_tokens(tape, phi_key, key_times, intermediates, &targets, n, |tape, phi| {
        keyframe_bridge(tape, p, cfg, phi, features, key_times)
    })?;
    let (roots, quats_raw) = stage3_synthesize(tape, p, cfg, manifold)?;
    Ok(Forward {
        phi_key,
        intermediates,
        manifold,
        roots,
        quats_raw,
    })
}
