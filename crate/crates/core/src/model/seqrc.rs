//! Sequence-level re-centering of positional inputs.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, Quat, Vec3};
use crate::mocap::{KeyframeSet, Skeleton};

/// What is needed to map normalized positions back to scene units.
///
/// The mean keyframe root is held as `anchor + mean_offset`, where `anchor`
/// is the first keyframe root and `mean_offset` the mean of the keyframe
/// roots relative to it. Relative offsets do not depend on where the clip
/// sits in the scene, which keeps the whole pipeline translation-equivariant
/// in floating point and not just in exact arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqRcState {
    pub anchor: Vec3,
    pub mean_offset: Vec3,
    pub pos_scale: f64,
}

impl SeqRcState {
    pub fn from_roots(roots: &[Vec3], pos_scale: f64) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::Contract("re-centering needs at least one root".into()));
        }
        if !(pos_scale.is_finite() && pos_scale > 0.0) {
            return Err(Error::Config(format!("pos_scale must be positive, got {pos_scale}")));
        }
        let anchor = roots[0];
        let mut sum = [0.0; 3];
        for r in roots {
            for c in 0..3 {
                sum[c] += r[c] - anchor[c];
            }
        }
        let k = roots.len() as f64;
        Ok(Self {
            anchor,
            mean_offset: [sum[0] / k, sum[1] / k, sum[2] / k],
            pos_scale,
        })
    }

    pub fn mean_root(&self) -> Vec3 {
        std::array::from_fn(|c| self.anchor[c] + self.mean_offset[c])
    }

    /// Root position relative to the mean keyframe root, before scaling.
    pub fn centered(&self, root: Vec3) -> Vec3 {
        std::array::from_fn(|c| (root[c] - self.anchor[c]) - self.mean_offset[c])
    }

    pub fn normalize_root(&self, root: Vec3) -> Vec3 {
        let d = self.centered(root);
        std::array::from_fn(|c| d[c] * self.pos_scale)
    }

    pub fn denormalize_root(&self, p: Vec3) -> Vec3 {
        std::array::from_fn(|c| self.anchor[c] + (p[c] / self.pos_scale + self.mean_offset[c]))
    }

    /// Normalized global joint positions of one frame, flattened to `3J`.
    pub fn normalize_pose(&self, skeleton: &Skeleton, root: Vec3, local: &[Quat]) -> Result<Vec<f64>> {
        let rel = forward_kinematics(skeleton, [0.0; 3], local)?;
        let d = self.centered(root);
        Ok(rel
            .positions
            .iter()
            .flat_map(|p| (0..3).map(move |c| (p[c] + d[c]) * self.pos_scale))
            .collect())
    }
}

/// One `7J` feature row: normalized global positions followed by local
/// quaternions, each joint contributing `(x, y, z)` then `(w, x, y, z)`.
pub fn feature_row(state: &SeqRcState, skeleton: &Skeleton, root: Vec3, local: &[Quat]) -> Result<Vec<f64>> {
    let mut row = state.normalize_pose(skeleton, root, local)?;
    row.extend(local.iter().flat_map(|q| q.to_array()));
    Ok(row)
}

/// Re-center and scale the keyframes, returning `K × 7J` features and the
/// state needed to undo the transform on predictions.
pub fn seq_rc_apply(keyframes: &KeyframeSet, pos_scale: f64) -> Result<(Tensor, SeqRcState)> {
    keyframes.validate()?;
    let state = SeqRcState::from_roots(&keyframes.root_positions, pos_scale)?;
    let rows = (0..keyframes.count())
        .map(|k| feature_row(&state, &keyframes.skeleton, keyframes.root_positions[k], keyframes.rotations(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::from_rows(&rows)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::MotionClip;

    fn clip(roots: Vec<Vec3>) -> MotionClip {
        let n = roots.len();
        let sk = Skeleton::chain(2, [0.0, 1.0, 0.0]);
        MotionClip::new(sk, 30, roots, vec![Quat::IDENTITY; 2 * n]).unwrap()
    }

    #[test]
    fn mean_of_two_roots() {
        let c = clip(vec![[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]);
        let keys = KeyframeSet::from_indices(&c, vec![0, 1]).unwrap();
        let (f, s) = seq_rc_apply(&keys, 1.0).unwrap();
        assert_eq!(s.mean_root(), [2.0, 2.0, 2.0]);
        assert_eq!(&f.row(0)[..3], &[-1.0, 0.0, 1.0]);
        assert_eq!(&f.row(1)[..3], &[1.0, 0.0, -1.0]);
        // The child sits one unit above the root; rotations pass through.
        assert_eq!(&f.row(0)[3..6], &[-1.0, 1.0, 1.0]);
        assert_eq!(&f.row(0)[6..10], &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn origin_keyframes_unchanged() {
        let c = clip(vec![[0.0; 3]; 3]);
        let keys = KeyframeSet::from_indices(&c, vec![0, 2]).unwrap();
        let (f, _) = seq_rc_apply(&keys, 1.0).unwrap();
        assert_eq!(&f.row(1)[..6], &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn translation_absorbed() {
        let roots = vec![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0], [3.0, 2.0, 1.0]];
        let shifted = roots.iter().map(|r| [r[0] + 5.0, r[1] + 5.0, r[2] + 5.0]).collect();
        let a = KeyframeSet::from_indices(&clip(roots), vec![0, 1, 2]).unwrap();
        let b = KeyframeSet::from_indices(&clip(shifted), vec![0, 1, 2]).unwrap();
        assert_eq!(seq_rc_apply(&a, 0.3).unwrap().0, seq_rc_apply(&b, 0.3).unwrap().0);
    }

    #[test]
    fn scale_multiplies_positions_only() {
        let c = clip(vec![[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]);
        let keys = KeyframeSet::from_indices(&c, vec![0, 1]).unwrap();
        let (f, _) = seq_rc_apply(&keys, 0.5).unwrap();
        assert_eq!(&f.row(0)[..6], &[-0.5, 0.0, 0.5, -0.5, 0.5, 0.5]);
        assert_eq!(&f.row(0)[6..10], &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_then_invert_is_identity() {
        let roots = [[12.5, -3.25, 7.0], [-4.0, 0.1, 2.2], [100.0, 5.0, -60.0]];
        let s = SeqRcState::from_roots(&roots, 0.037).unwrap();
        for r in roots.iter().chain(&[[1e3, -1e3, 0.5]]) {
            let back = s.denormalize_root(s.normalize_root(*r));
            for c in 0..3 {
                assert!((back[c] - r[c]).abs() < 1e-12, "{back:?} vs {r:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(SeqRcState::from_roots(&[[0.0; 3]], 0.0).is_err());
        assert!(SeqRcState::from_roots(&[[0.0; 3]], f64::NAN).is_err());
    }
}
