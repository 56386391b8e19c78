use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{EulerOrder, Quat, Vec3};

/// Joint hierarchy with constant local offsets.
///
/// Joints are stored in topological order: every parent index is smaller than
/// its child's, and joint 0 is the only root (parent `-1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parents: Vec<i32>,
    pub offsets: Vec<Vec3>,
    /// Euler order used when the skeleton is written back to BVH. Not part of
    /// the clip container; loaded clips get the default order.
    pub rotation_orders: Vec<EulerOrder>,
}

impl Skeleton {
    pub fn new(joint_names: Vec<String>, parents: Vec<i32>, offsets: Vec<Vec3>) -> Result<Self> {
        let rotation_orders = vec![EulerOrder::default(); parents.len()];
        let s = Self {
            joint_names,
            parents,
            offsets,
            rotation_orders,
        };
        s.validate()?;
        Ok(s)
    }

    /// A straight chain along `offset`, handy for tests and synthetic data.
    pub fn chain(joints: usize, offset: Vec3) -> Self {
        let names = (0..joints).map(|j| format!("joint{j}")).collect();
        let parents = (0..joints as i32).map(|j| j - 1).collect();
        let mut offsets = vec![offset; joints];
        offsets[0] = [0.0; 3];
        Self::new(names, parents, offsets).expect("chain skeleton is valid")
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        usize::try_from(self.parents[joint]).ok()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.parents.len();
        if j == 0 {
            return Err(Error::Structural("skeleton has no joints".into()));
        }
        if self.offsets.len() != j || self.joint_names.len() != j || self.rotation_orders.len() != j {
            return Err(Error::Structural(format!(
                "skeleton arrays disagree: {} parents, {} offsets, {} names, {} orders",
                j,
                self.offsets.len(),
                self.joint_names.len(),
                self.rotation_orders.len()
            )));
        }
        if self.parents[0] != -1 {
            return Err(Error::Structural("joint 0 must be the root (parent -1)".into()));
        }
        for (joint, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= joint {
                return Err(Error::Structural(format!(
                    "joint {joint} has parent {p}; parents must precede children and only joint 0 may be a root"
                )));
            }
        }
        Ok(())
    }
}

/// A motion sequence: per-frame root positions and per-joint local rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    pub fps: u32,
    pub root_positions: Vec<Vec3>,
    /// Row-major `frames × joints`.
    pub local_rotations: Vec<Quat>,
}

impl MotionClip {
    pub fn new(
        skeleton: Skeleton,
        fps: u32,
        root_positions: Vec<Vec3>,
        local_rotations: Vec<Quat>,
    ) -> Result<Self> {
        let clip = Self {
            skeleton,
            fps,
            root_positions,
            local_rotations,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        let n = self.root_positions.len();
        let j = self.skeleton.len();
        if self.fps == 0 {
            return Err(Error::Structural("fps must be positive".into()));
        }
        if n < 2 {
            return Err(Error::Structural(format!("clip needs at least 2 frames, got {n}")));
        }
        if self.local_rotations.len() != n * j {
            return Err(Error::Structural(format!(
                "expected {} rotations for {n} frames × {j} joints, got {}",
                n * j,
                self.local_rotations.len()
            )));
        }
        for (i, q) in self.local_rotations.iter().enumerate() {
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Structural(format!(
                    "rotation of frame {} joint {} is not unit length (|q| = {})",
                    i / j,
                    i % j,
                    q.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.root_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root_positions.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.skeleton.len()
    }

    pub fn frame_rotations(&self, frame: usize) -> &[Quat] {
        let j = self.joints();
        &self.local_rotations[frame * j..(frame + 1) * j]
    }

    pub fn rotation(&self, frame: usize, joint: usize) -> Quat {
        self.local_rotations[frame * self.joints() + joint]
    }

    /// Frames `start..start + len` as a new clip.
    pub fn window(&self, start: usize, len: usize) -> Result<MotionClip> {
        if len < 2 || start + len > self.len() {
            return Err(Error::Contract(format!(
                "window {start}..{} outside clip of {} frames",
                start + len,
                self.len()
            )));
        }
        let j = self.joints();
        Ok(MotionClip {
            skeleton: self.skeleton.clone(),
            fps: self.fps,
            root_positions: self.root_positions[start..start + len].to_vec(),
            local_rotations: self.local_rotations[start * j..(start + len) * j].to_vec(),
        })
    }

    /// Keep every `fps / target_fps`-th frame starting at frame 0.
    pub fn resample(&self, target_fps: u32) -> Result<MotionClip> {
        if target_fps == 0 || self.fps % target_fps != 0 {
            return Err(Error::UnsupportedRate {
                fps: self.fps,
                target: target_fps,
            });
        }
        let stride = (self.fps / target_fps) as usize;
        let j = self.joints();
        let frames: Vec<usize> = (0..self.len()).step_by(stride).collect();
        if frames.len() < 2 {
            return Err(Error::Structural(format!(
                "resampling {} frames by {stride} leaves fewer than 2 frames",
                self.len()
            )));
        }
        let root_positions = frames.iter().map(|&f| self.root_positions[f]).collect();
        let local_rotations = frames
            .iter()
            .flat_map(|&f| self.local_rotations[f * j..(f + 1) * j].iter().copied())
            .collect();
        Ok(MotionClip {
            skeleton: self.skeleton.clone(),
            fps: target_fps,
            root_positions,
            local_rotations,
        })
    }

    /// Make frame 0 of every joint have `w ≥ 0`, then flip later frames so
    /// consecutive quaternions of a joint have a non-negative dot product.
    pub fn canonicalize_hemispheres(&mut self) {
        let j = self.joints();
        for q in &mut self.local_rotations {
            if q.w < 0.0 {
                *q = -*q;
            }
        }
        for f in 1..self.len() {
            for joint in 0..j {
                let prev = self.local_rotations[(f - 1) * j + joint];
                let cur = &mut self.local_rotations[f * j + joint];
                *cur = cur.aligned_to(prev);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(frames: usize, fps: u32) -> MotionClip {
        let skeleton = Skeleton::chain(2, [0.0, 1.0, 0.0]);
        let roots = (0..frames).map(|f| [f as f64, 0.0, 0.0]).collect();
        let rots = (0..frames * 2)
            .map(|i| Quat::from_axis_angle([0.0, 0.0, 1.0], i as f64 * 0.01))
            .collect();
        MotionClip::new(skeleton, fps, roots, rots).unwrap()
    }

    #[test]
    fn skeleton_validation() {
        assert!(Skeleton::new(vec!["a".into()], vec![0], vec![[0.0; 3]]).is_err());
        assert!(Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![-1, 1],
            vec![[0.0; 3]; 2]
        )
        .is_err());
        assert!(Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![-1, -1],
            vec![[0.0; 3]; 2]
        )
        .is_err());
        assert!(Skeleton::new(vec![], vec![], vec![]).is_err());
        assert!(Skeleton::new(vec!["a".into()], vec![-1], vec![]).is_err());
    }

    #[test]
    fn clip_rejects_non_unit_rotations() {
        let mut c = clip(3, 30);
        c.local_rotations[1] = Quat::new(2.0, 0.0, 0.0, 0.0);
        assert!(matches!(c.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn resample_decimates() {
        let c = clip(121, 120);
        let r = c.resample(30).unwrap();
        assert_eq!(r.fps, 30);
        assert_eq!(r.len(), 31);
        for (i, p) in r.root_positions.iter().enumerate() {
            assert_eq!(p[0], (4 * i) as f64);
        }
        assert_eq!(r.frame_rotations(30), c.frame_rotations(120));
        assert_eq!(c.resample(120).unwrap(), c);
        assert!(matches!(
            c.resample(50),
            Err(Error::UnsupportedRate { fps: 120, target: 50 })
        ));
        assert_eq!(r.resample(30).unwrap(), r);
    }

    #[test]
    fn canonicalization_enforces_continuity() {
        let mut c = clip(4, 30);
        c.local_rotations[0] = -c.local_rotations[0];
        c.local_rotations[4] = -c.local_rotations[4];
        c.canonicalize_hemispheres();
        assert!(c.local_rotations[0].w >= 0.0);
        for f in 1..4 {
            for j in 0..2 {
                assert!(c.rotation(f, j).dot(c.rotation(f - 1, j)) >= 0.0);
            }
        }
    }
}
