//! Seeded procedural motion for tests, benchmarks and desk-scale training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kinematics::{Quat, Vec3};
use crate::mocap::{MotionClip, Skeleton};
use crate::training::Dataset;

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// A small branching skeleton: joint `j` hangs off joint `(j − 1) / 2`.
pub fn branching_skeleton(joints: usize, seed: u64) -> Skeleton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..joints).map(|j| format!("joint{j}")).collect();
    let parents = (0..joints).map(|j| if j == 0 { -1 } else { ((j - 1) / 2) as i32 }).collect();
    let offsets = (0..joints)
        .map(|j| {
            if j == 0 {
                [0.0; 3]
            } else {
                let d = unit_vector(&mut rng);
                let len = rng.random_range(0.5..1.5);
                [d[0] * len, d[1] * len, d[2] * len]
            }
        })
        .collect();
    Skeleton::new(names, parents, offsets).expect("generated skeleton is valid")
}

/// Smooth periodic motion: every joint swings about its own axis with a
/// few-cycle sinusoid, and the root drifts while bobbing.
pub fn sinusoidal_clip(skeleton: &Skeleton, frames: usize, fps: u32, seed: u64) -> Result<MotionClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = skeleton.len();
    let joint_motion: Vec<(Vec3, f64, f64, f64, f64)> = (0..j)
        .map(|_| {
            (
                unit_vector(&mut rng),
                rng.random_range(0.2..0.8),
                rng.random_range(0.5..2.5),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    let velocity: Vec3 = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
    let bob = rng.random_range(0.05..0.3);
    let bob_cycles = rng.random_range(1.0..3.0);
    let period = frames.max(2) as f64;
    let mut roots = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames * j);
    for t in 0..frames {
        let phase = std::f64::consts::TAU * t as f64 / period;
        let tf = t as f64;
        roots.push([
            velocity[0] * tf,
            1.0 + velocity[1] * tf + bob * (bob_cycles * phase).sin(),
            velocity[2] * tf,
        ]);
        for (axis, amp, cycles, offset, bias) in &joint_motion {
            let angle = bias + amp * (cycles * phase + offset).sin();
            rotations.push(Quat::from_axis_angle(*axis, angle));
        }
    }
    let mut clip = MotionClip::new(skeleton.clone(), fps, roots, rotations)?;
    clip.canonicalize_hemispheres();
    Ok(clip)
}

/// Root moving piecewise-linearly between random knots, rotations fixed.
/// Linear interpolation between keyframes placed on the knots is exact.
pub fn piecewise_linear_clip(skeleton: &Skeleton, frames: usize, knots: &[usize], seed: u64) -> Result<MotionClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = skeleton.len();
    let knot_positions: Vec<Vec3> = knots
        .iter()
        .map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0)))
        .collect();
    let pose: Vec<Quat> = (0..j)
        .map(|_| Quat::from_axis_angle(unit_vector(&mut rng), rng.random_range(-1.0..1.0)).aligned_to(Quat::IDENTITY))
        .collect();
    let mut roots = Vec::with_capacity(frames);
    for t in 0..frames {
        let seg = knots.windows(2).position(|w| t >= w[0] && t <= w[1]).unwrap_or(0);
        let (a, b) = (knots[seg], knots[seg + 1]);
        let u = (t - a) as f64 / (b - a) as f64;
        let (pa, pb) = (knot_positions[seg], knot_positions[seg + 1]);
        roots.push(std::array::from_fn(|c| pa[c] + u * (pb[c] - pa[c])));
    }
    let rotations = (0..frames).flat_map(|_| pose.iter().copied()).collect();
    MotionClip::new(skeleton.clone(), 30, roots, rotations)
}

pub const DESK_CLIPS: usize = 4;
pub const DESK_FRAMES: usize = 120;
pub const DESK_JOINTS: usize = 5;

/// Four 120-frame sinusoidal clips on one 5-joint skeleton, used for
/// desk-scale training runs and the overfit check.
pub fn desk_dataset() -> Result<Dataset> {
    let sk = branching_skeleton(DESK_JOINTS, 11);
    let clips = (0..DESK_CLIPS as u64)
        .map(|s| sinusoidal_clip(&sk, DESK_FRAMES, 30, 100 + s))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new((0..DESK_CLIPS).map(|i| format!("synthetic{i}")).collect(), clips)
}
