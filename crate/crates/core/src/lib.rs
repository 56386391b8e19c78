//! Keyframe-driven motion in-betweening.
//!
//! Sparse keyframes are encoded into context tokens, every missing frame gets
//! an intermediate token by attending from its time index into that context,
//! and a convolution/transformer synthesizer decodes the full token sequence
//! back into root positions and joint rotations.

pub mod autodiff;
mod container;
mod error;
pub mod eval;
pub mod kinematics;
pub mod mocap;
pub mod model;
pub mod synthetic;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use kinematics::{fk_batch, forward_kinematics, GlobalPose, Quat, Vec3};
pub use mocap::{KeyframePolicy, KeyframeSet, MotionClip, Skeleton};
pub use model::{interpolate, predict, KeyframeBridge, ModelConfig, ModelParams, NormMode, PeMode};

