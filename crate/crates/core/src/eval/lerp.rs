use crate::error::Result;
use crate::mocap::{KeyframeSet, MotionClip};

/// Linear interpolation of root positions and spherical interpolation of
/// local rotations between consecutive keyframes. Keyframes are reproduced
/// exactly.
pub fn lerp_baseline(keyframes: &KeyframeSet, fps: u32) -> Result<MotionClip> {
    keyframes.validate()?;
    let j = keyframes.skeleton.len();
    let n = keyframes.len;
    let mut roots = Vec::with_capacity(n);
    let mut rotations = Vec::with_capacity(n * j);
    for k in 0..keyframes.count() - 1 {
        let (a, b) = (keyframes.indices[k], keyframes.indices[k + 1]);
        let (ra, rb) = (keyframes.root_positions[k], keyframes.root_positions[k + 1]);
        let (qa, qb) = (keyframes.rotations(k), keyframes.rotations(k + 1));
        roots.push(ra);
        rotations.extend_from_slice(qa);
        for t in a + 1..b {
            let u = (t - a) as f64 / (b - a) as f64;
            roots.push(std::array::from_fn(|c| ra[c] + u * (rb[c] - ra[c])));
            rotations.extend(qa.iter().zip(qb).map(|(x, y)| x.slerp(*y, u)));
        }
    }
    let last = keyframes.count() - 1;
    roots.push(keyframes.root_positions[last]);
    rotations.extend_from_slice(keyframes.rotations(last));
    MotionClip::new(keyframes.skeleton.clone(), fps, roots, rotations)
}
