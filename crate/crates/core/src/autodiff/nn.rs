use crate::error::{Error, Result};

use super::tape::{Tape, Var};

/// `x · W + b` over the rows of `x`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Unmasked multi-head attention.
///
/// Queries come from `q_src [Lq, d]`, keys and values from `k_src` and
/// `v_src [Lk, d]`. Each head attends with `softmax(QKᵀ / √(d/h)) V` on its
/// slice of the projected features; the heads are concatenated and projected
/// by `wo`.
pub fn multi_head_attention(
    tape: &mut Tape,
    q_src: Var,
    k_src: Var,
    v_src: Var,
    heads: usize,
    p: &AttentionParams,
) -> Result<Var> {
    let d = tape.value(q_src).cols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!(
            "model width {d} is not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let q = linear(tape, q_src, p.wq, p.bq)?;
    let k = linear(tape, k_src, p.wk, p.bk)?;
    let v = linear(tape, v_src, p.wv, p.bv)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale)?;
        let weights = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let merged = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    linear(tape, merged, p.wo, p.bo)
}

#[derive(Clone, Copy, Debug)]
pub struct FfnParams {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Two linear maps with a GELU between them.
pub fn ffn(tape: &mut Tape, x: Var, p: &FfnParams) -> Result<Var> {
    let h = linear(tape, x, p.w1, p.b1)?;
    let h = tape.gelu(h)?;
    linear(tape, h, p.w2, p.b2)
}

/// Gain (and bias, for LayerNorm) of a normalization layer.
#[derive(Clone, Copy, Debug)]
pub enum NormParams {
    Rms { gain: Var },
    Layer { gain: Var, bias: Var },
}

pub const NORM_EPS: f64 = 1e-6;

pub fn norm(tape: &mut Tape, x: Var, p: &NormParams) -> Result<Var> {
    match *p {
        NormParams::Rms { gain } => tape.rms_norm(x, gain, NORM_EPS),
        NormParams::Layer { gain, bias } => tape.layer_norm(x, gain, bias, NORM_EPS),
    }
}
