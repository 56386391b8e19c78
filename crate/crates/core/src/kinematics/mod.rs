//! Quaternion algebra, Euler conversions and forward kinematics.

mod euler;
mod fk;
mod quat;

pub use euler::EulerOrder;
pub use fk::{fk_batch, forward_kinematics, GlobalPose};
pub use quat::{quat_mul, rotate_vec, Quat, Vec3};
#[allow(unused_imports)]
pub(crate) use quat::{add3, cross, norm3, scale3};
