//! Self-checks run by the `verify` command: gradients of the full model,
//! forward kinematics against a matrix oracle, the schedules, the bundled BVH
//! corpus and translation equivariance.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::autodiff::{check_gradients_perturbed, GradCheckReport, Tensor};
use crate::error::Result;
use crate::kinematics::{fk_batch, Quat, Vec3};
use crate::mocap::{parse_bvh, write_bvh, KeyframeSet, MotionClip, Skeleton};
use crate::model::{interpolate, Bound, ModelConfig, ModelParams};
use crate::synthetic::{branching_skeleton, sinusoidal_clip};
use crate::training::{alpha_g, lr_schedule, sample_loss_on_tape, total_on_tape, Sample, ALPHA_L};

/// BVH files shipped with the crate, as `(file name, contents)`.
pub const BVH_CORPUS: &[(&str, &str)] = &[
    ("branch5_zyx.bvh", include_str!("../data/bvh/branch5_zyx.bvh")),
    ("chain2_xyz.bvh", include_str!("../data/bvh/chain2_xyz.bvh")),
    ("chain3_zxy_short.bvh", include_str!("../data/bvh/chain3_zxy_short.bvh")),
    ("chain4_yxz_tabs.bvh", include_str!("../data/bvh/chain4_yxz_tabs.bvh")),
    ("chain8_xzy_60fps.bvh", include_str!("../data/bvh/chain8_xzy_60fps.bvh")),
    ("crlf_joint_positions.bvh", include_str!("../data/bvh/crlf_joint_positions.bvh")),
    ("humanoid22_zxy.bvh", include_str!("../data/bvh/humanoid22_zxy.bvh")),
    ("mixed_orders.bvh", include_str!("../data/bvh/mixed_orders.bvh")),
    ("root_only.bvh", include_str!("../data/bvh/root_only.bvh")),
    ("root_rot_first.bvh", include_str!("../data/bvh/root_rot_first.bvh")),
    ("star6_yzx.bvh", include_str!("../data/bvh/star6_yzx.bvh")),
];

/// Finite-difference step and pass threshold of the model gradient check.
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error. Central differences at this step
/// carry roundoff near `ε·|L|/h ≈ 1e−10` on O(1) losses, which swamps any
/// gradient much below 1e−6; gradients under the floor are therefore judged
/// by absolute error, `|a − n| < tolerance · floor = 1e−9`.
pub const GRAD_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Add an offset to one analytic gradient element so the gradient check
    /// must fail.
    pub perturb_gradient: bool,
}

/// The sample used by the gradient check: the tiny model with 3 joints on a
/// 12-frame clip keyed at 4 frames.
pub fn gradient_check_sample() -> Result<(ModelParams, Sample)> {
    let cfg = ModelConfig::tiny(3);
    let mut params = ModelParams::init(cfg, 17)?;
    params.pos_scale = 0.5;
    let sk = branching_skeleton(3, 5);
    let window = sinusoidal_clip(&sk, 12, 30, 6)?;
    let keyframes = KeyframeSet::from_indices(&window, vec![0, 4, 7, 11])?;
    Ok((
        params,
        Sample {
            clip: 0,
            start: 0,
            window,
            keyframes,
        },
    ))
}

/// Compare every parameter gradient of the total loss with central differences.
pub fn model_gradient_check(
    params: &ModelParams,
    sample: &Sample,
    alpha_g: f64,
    perturb: Option<(usize, usize, f64)>,
) -> Result<(GradCheckReport, Vec<String>)> {
    let names: Vec<String> = params.tensors.keys().cloned().collect();
    let inputs: Vec<Tensor> = params.tensors.values().cloned().collect();
    let report = check_gradients_perturbed(&inputs, GRAD_STEP, GRAD_FLOOR, perturb, |tape, vars| {
        let bound = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()), params.config.norm_mode);
        let terms = sample_loss_on_tape(tape, &bound, &params.config, params.pos_scale, sample)?;
        total_on_tape(tape, &terms, ALPHA_L, alpha_g)
    })?;
    Ok((report, names))
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, serde_json::Value)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, json!({ "error": e.to_string() })));
    CheckResult {
        name: name.to_string(),
        passed,
        seconds: start.elapsed().as_secs_f64(),
        detail,
    }
}

fn gradient_check(opts: VerifyOptions) -> Result<(bool, serde_json::Value)> {
    let (params, sample) = gradient_check_sample()?;
    let perturb = opts.perturb_gradient.then_some((0, 0, 1e-2));
    let (report, names) = model_gradient_check(&params, &sample, 0.5, perturb)?;
    let worst = report.worst.map(|(i, e, a, n)| json!({ "param": names[i], "element": e, "analytic": a, "numeric": n }));
    Ok((
        report.passed(GRAD_TOLERANCE),
        json!({
            "checked": report.checked,
            "max_rel_error": report.max_rel_error,
            "tolerance": GRAD_TOLERANCE,
            "worst": worst,
        }),
    ))
}

pub fn random_skeleton<R: Rng>(rng: &mut R, joints: usize) -> Skeleton {
    let names = (0..joints).map(|j| format!("j{j}")).collect();
    let parents = (0..joints).map(|j| if j == 0 { -1 } else { rng.random_range(0..j) as i32 }).collect();
    let offsets = (0..joints)
        .map(|j| if j == 0 { [0.0; 3] } else { std::array::from_fn(|_| rng.random_range(-2.0..2.0)) })
        .collect();
    Skeleton::new(names, parents, offsets).expect("random skeleton is valid")
}

pub fn random_unit_quat<R: Rng>(rng: &mut R) -> Quat {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q.normalize();
        }
    }
}

pub fn random_clip<R: Rng>(rng: &mut R, skeleton: &Skeleton, frames: usize) -> Result<MotionClip> {
    let roots = (0..frames).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
    let rots = (0..frames * skeleton.len()).map(|_| random_unit_quat(rng)).collect();
    MotionClip::new(skeleton.clone(), 30, roots, rots)
}

type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Global positions and rotation matrices through 4×4 homogeneous transforms.
fn matrix_fk(sk: &Skeleton, root: Vec3, local: &[Quat]) -> Vec<Mat4> {
    let mut globals: Vec<Mat4> = Vec::with_capacity(local.len());
    for (j, q) in local.iter().enumerate() {
        let r = q.normalize().to_matrix();
        let t = if j == 0 { root } else { sk.offsets[j] };
        let m: Mat4 = std::array::from_fn(|a| {
            std::array::from_fn(|b| match (a, b) {
                (3, 3) => 1.0,
                (3, _) => 0.0,
                (_, 3) => t[a],
                _ => r[a][b],
            })
        });
        globals.push(match sk.parent(j) {
            None => m,
            Some(p) => mat_mul(&globals[p], &m),
        });
    }
    globals
}

#[allow(clippy::needless_range_loop)]
fn fk_oracle() -> Result<(bool, serde_json::Value)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_pos = 0.0f64;
    let mut max_rot = 0.0f64;
    let mut max_flip = 0.0f64;
    for _ in 0..100 {
        let j = rng.random_range(1..=8);
        let n = rng.random_range(2..=16);
        let sk = random_skeleton(&mut rng, j);
        let clip = random_clip(&mut rng, &sk, n)?;
        let poses = fk_batch(&clip)?;
        let mut flipped = clip.clone();
        for q in &mut flipped.local_rotations {
            if rng.random_bool(0.5) {
                *q = -*q;
            }
        }
        let flipped_poses = fk_batch(&flipped)?;
        for t in 0..n {
            let oracle = matrix_fk(&sk, clip.root_positions[t], clip.frame_rotations(t));
            for k in 0..j {
                let m = oracle[k];
                for c in 0..3 {
                    max_pos = max_pos.max((poses[t].positions[k][c] - m[c][3]).abs());
                    max_flip = max_flip.max((poses[t].positions[k][c] - flipped_poses[t].positions[k][c]).abs());
                }
                let r = poses[t].rotations[k].to_matrix();
                let rf = flipped_poses[t].rotations[k].to_matrix();
                for a in 0..3 {
                    for b in 0..3 {
                        max_rot = max_rot.max((r[a][b] - m[a][b]).abs());
                        max_flip = max_flip.max((r[a][b] - rf[a][b]).abs());
                    }
                }
            }
        }
    }
    let tol = 1e-9;
    Ok((
        max_pos < tol && max_rot < tol && max_flip < tol,
        json!({ "clips": 100, "max_position_error": max_pos, "max_rotation_error": max_rot, "max_sign_flip_error": max_flip, "tolerance": tol }),
    ))
}

fn schedules() -> Result<(bool, serde_json::Value)> {
    let lr = lr_schedule(1000, 4e-4, 1000)?;
    let expected = 4e-4 * 1000f64.powf(-0.5);
    let rise = 4e-4 * (1000.0 * 1000f64.powf(-1.5));
    let rel = ((lr - expected) / expected).abs().max(((lr - rise) / rise).abs());
    let mid = alpha_g(1500, 1000, 1000);
    let mut continuous = true;
    for e in 0..3000 {
        continuous &= (alpha_g(e + 1, 1000, 1000) - alpha_g(e, 1000, 1000)).abs() <= 1e-3 + 1e-15;
    }
    Ok((
        rel < 1e-15 && mid == 0.5 && continuous && lr_schedule(0, 4e-4, 1000).is_err(),
        json!({ "lr_at_warmup": lr, "relative_error": rel, "alpha_g_mid_ramp": mid, "alpha_g_continuous": continuous }),
    ))
}

fn quat_distance(a: Quat, b: Quat) -> f64 {
    let d = |s: f64| {
        a.to_array()
            .iter()
            .zip(b.to_array())
            .map(|(x, y)| (x - s * y).abs())
            .fold(0.0, f64::max)
    };
    d(1.0).min(d(-1.0))
}

/// Malformed inputs that must be rejected with an error.
pub const MALFORMED_BVH: &[(&str, &str)] = &[
    ("empty", ""),
    ("no motion", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\n"),
    ("no hierarchy", "MOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n"),
    ("bad channel", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Wrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
    ("too many channels", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 7 Xposition Yposition Zposition Zrotation Xrotation Yrotation Xrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0 0 0 0 0\n0 0 0 0 0 0 0\n"),
    ("short row", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0\n"),
    ("frame count", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 3\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
    ("bad number", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 zero 0\n0 0 0\n"),
    ("nan value", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 NaN 0\n0 0 0\n"),
    ("unclosed brace", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
    ("missing offset", "HIERARCHY\nROOT A\n{\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
    ("zero frame time", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0\n0 0 0\n0 0 0\n"),
    ("negative frames", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: -2\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
    ("single frame", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n"),
    ("two roots", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nROOT B\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Xrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0 0 0 0\n0 0 0 0 0 0\n"),
    ("duplicate channel", "HIERARCHY\nROOT A\n{\nOFFSET 0 0 0\nCHANNELS 3 Zrotation Zrotation Yrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0 0\n"),
];

/// Largest rotation and root deviation of one parse → emit → parse cycle.
pub fn bvh_round_trip(text: &str) -> Result<(f64, f64)> {
    let (_, first) = parse_bvh(text)?;
    let (_, second) = parse_bvh(&write_bvh(&first))?;
    let rot = first
        .local_rotations
        .iter()
        .zip(&second.local_rotations)
        .map(|(a, b)| quat_distance(*a, *b))
        .fold(0.0, f64::max);
    let pos = first
        .root_positions
        .iter()
        .zip(&second.root_positions)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .fold(0.0, f64::max);
    Ok((rot, pos))
}

fn bvh_corpus() -> Result<(bool, serde_json::Value)> {
    let mut worst = 0.0f64;
    let mut files = Vec::new();
    let mut ok = BVH_CORPUS.len() >= 10;
    for (name, text) in BVH_CORPUS {
        match bvh_round_trip(text) {
            Ok((rot, pos)) => {
                worst = worst.max(rot);
                ok &= rot < 1e-6 && pos < 1e-6;
                files.push(json!({ "file": name, "rotation_error": rot, "root_error": pos }));
            }
            Err(e) => {
                ok = false;
                files.push(json!({ "file": name, "error": e.to_string() }));
            }
        }
    }
    let mut rejected = Vec::new();
    for (label, text) in MALFORMED_BVH {
        let err = parse_bvh(text).err();
        ok &= err.is_some();
        rejected.push(json!({ "case": label, "error": err.map(|e| e.to_string()) }));
    }
    Ok((ok, json!({ "files": files, "max_rotation_error": worst, "malformed": rejected })))
}

/// Roots in `[88, 92)` and shifts on a 1/8 grid within ±8 keep every
/// translated root inside the binade `[64, 128)`, where adding the shift is
/// exact; the output must then move by exactly the shift.
pub fn translation_case(seed: u64) -> Result<(KeyframeSet, KeyframeSet, Vec3, ModelParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig::tiny(3);
    let params = ModelParams {
        pos_scale: rng.random_range(0.1..2.0),
        ..ModelParams::init(cfg, seed)?
    };
    let sk = branching_skeleton(3, seed);
    let mut clip = sinusoidal_clip(&sk, 16, 30, seed)?;
    for r in &mut clip.root_positions {
        *r = std::array::from_fn(|_| rng.random_range(88.0..92.0));
    }
    let keys = KeyframeSet::from_indices(&clip, vec![0, 5, 9, 15])?;
    let shift: Vec3 = std::array::from_fn(|_| rng.random_range(-64i32..=64) as f64 / 8.0);
    let mut moved = keys.clone();
    for r in &mut moved.root_positions {
        *r = std::array::from_fn(|c| r[c] + shift[c]);
    }
    Ok((keys, moved, shift, params))
}

fn translation_equivariance() -> Result<(bool, serde_json::Value)> {
    let mut failures = Vec::new();
    for seed in 0..20 {
        let (keys, moved, shift, params) = translation_case(seed)?;
        let a = interpolate(&keys, &params, 30)?;
        let b = interpolate(&moved, &params, 30)?;
        let roots_ok = a
            .root_positions
            .iter()
            .zip(&b.root_positions)
            .all(|(ra, rb)| (0..3).all(|c| (ra[c] + shift[c]).to_bits() == rb[c].to_bits()));
        let rots_ok = a
            .local_rotations
            .iter()
            .zip(&b.local_rotations)
            .all(|(qa, qb)| qa.to_array().iter().zip(qb.to_array()).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !(roots_ok && rots_ok) {
            failures.push(seed);
        }
    }
    Ok((failures.is_empty(), json!({ "seeds": 20, "failed_seeds": failures })))
}

pub fn run_verify(opts: VerifyOptions) -> VerifyReport {
    let checks = vec![
        timed("gradient-check", || gradient_check(opts)),
        timed("fk-oracle", fk_oracle),
        timed("schedules", schedules),
        timed("bvh-corpus", bvh_corpus),
        timed("translation-equivariance", translation_equivariance),
    ];
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass() {
        for (name, f) in [
            ("fk", fk_oracle as fn() -> Result<(bool, serde_json::Value)>),
            ("schedules", schedules),
            ("bvh", bvh_corpus),
            ("translation", translation_equivariance),
        ] {
            let (ok, detail) = f().unwrap();
            assert!(ok, "{name}: {detail}");
        }
    }
}
