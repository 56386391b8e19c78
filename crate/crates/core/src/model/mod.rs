//! The three-stage interpolation network and its inference entry points.

mod config;
mod params;
mod positional;
mod seqrc;
mod stages;

pub use config::{KeyframeBridge, ModelConfig, NormMode, PeMode};
pub use params::{param_specs, Bound, Init, ModelParams, ParamSpec};
pub use positional::{positional_base, positional_code, positional_rows};
pub use seqrc::{feature_row, seq_rc_apply, SeqRcState};
pub use stages::{
    forward, inject_tokens, keyframe_bridge, stage1_encode, stage2_generate, stage3_synthesize, Forward,
    TokenSequence,
};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::kinematics::Quat;
use crate::mocap::{KeyframeSet, MotionClip};

/// A predicted clip together with the values behind it.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub clip: MotionClip,
    /// Quaternion head output before normalization, `N × J`.
    pub raw_rotations: Vec<[f64; 4]>,
    /// The full latent token sequence fed to the synthesizer.
    pub manifold: TokenSequence,
    pub seqrc: SeqRcState,
}

/// Run the network on a keyframe set and decode a full-length clip.
pub fn predict(keyframes: &KeyframeSet, params: &ModelParams, fps: u32) -> Result<Prediction> {
    let cfg = &params.config;
    keyframes.validate()?;
    if keyframes.skeleton.len() != cfg.joints {
        return Err(Error::Config(format!(
            "model expects {} joints, keyframes have {}",
            cfg.joints,
            keyframes.skeleton.len()
        )));
    }
    let (features, seqrc) = seq_rc_apply(keyframes, params.pos_scale)?;
    let n = keyframes.len;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let features = tape.constant(features);
    let out = forward(&mut tape, &bound, cfg, features, &keyframes.indices, n)?;

    let roots_norm = tape.value(out.roots);
    let quats = tape.value(out.quats_raw);
    let j = cfg.joints;
    let mut root_positions = Vec::with_capacity(n);
    let mut raw_rotations = Vec::with_capacity(n * j);
    let mut local_rotations = Vec::with_capacity(n * j);
    for t in 0..n {
        let r = roots_norm.row(t);
        root_positions.push(seqrc.denormalize_root([r[0], r[1], r[2]]));
        for q in quats.row(t).chunks_exact(4) {
            let raw = [q[0], q[1], q[2], q[3]];
            raw_rotations.push(raw);
            local_rotations.push(Quat::from_array(raw).normalize());
        }
    }
    if !root_positions.iter().flatten().all(|v| v.is_finite()) || !quats.is_finite() {
        return Err(Error::Contract("network produced non-finite output".into()));
    }
    let clip = MotionClip::new(keyframes.skeleton.clone(), fps, root_positions, local_rotations)?;
    let manifold = TokenSequence::new((0..n).collect(), tape.value(out.manifold).clone())?;
    Ok(Prediction {
        clip,
        raw_rotations,
        manifold,
        seqrc,
    })
}

/// Interpolate the missing frames of `keyframes`.
pub fn interpolate(keyframes: &KeyframeSet, params: &ModelParams, fps: u32) -> Result<MotionClip> {
    Ok(predict(keyframes, params, fps)?.clip)
}
