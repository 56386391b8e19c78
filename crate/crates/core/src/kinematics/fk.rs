use crate::error::{Error, Result};
use crate::mocap::{MotionClip, Skeleton};

use super::quat::{add3, Quat, Vec3};

/// Global joint positions and rotations of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quat>,
}

/// Compose local rotations down the hierarchy.
///
/// Local rotations are normalized before use, so `q` and `−q` (or any positive
/// multiple) produce the same pose up to the sign of the global quaternions.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    root_position: Vec3,
    local_rotations: &[Quat],
) -> Result<GlobalPose> {
    skeleton.validate()?;
    let j = skeleton.len();
    if local_rotations.len() != j {
        return Err(Error::Structural(format!(
            "{} local rotations for a {j}-joint skeleton",
            local_rotations.len()
        )));
    }
    let mut positions = Vec::with_capacity(j);
    let mut rotations: Vec<Quat> = Vec::with_capacity(j);
    for (joint, q) in local_rotations.iter().enumerate() {
        let q = q.normalize();
        match skeleton.parent(joint) {
            None => {
                positions.push(root_position);
                rotations.push(q);
            }
            Some(p) => {
                let parent_rot = rotations[p];
                positions.push(add3(positions[p], parent_rot.rotate(skeleton.offsets[joint])));
                rotations.push(parent_rot * q);
            }
        }
    }
    Ok(GlobalPose { positions, rotations })
}

pub fn fk_batch(clip: &MotionClip) -> Result<Vec<GlobalPose>> {
    (0..clip.len())
        .map(|t| forward_kinematics(&clip.skeleton, clip.root_positions[t], clip.frame_rotations(t)))
        .collect()
}
