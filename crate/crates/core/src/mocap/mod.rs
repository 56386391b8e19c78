//! Motion-capture ingestion: BVH text, the `.klm` clip container, resampling
//! and keyframe selection.

mod bvh;
mod clip;
mod format;
mod keyframes;

pub use bvh::{parse_bvh, write_bvh};
pub use clip::{MotionClip, Skeleton};
pub use format::{decode_clip, encode_clip, load_clip, save_clip, CLIP_MAGIC, CLIP_VERSION};
pub use keyframes::{
    count_bracket, keyframe_indices, make_keyframes, sample_keyframe_indices, sample_training_indices,
    training_count_bracket, KeyframePolicy, KeyframeSet, TRAINING_DIVISORS,
};

/// Keep every `fps / target_fps`-th frame of `clip`.
pub fn resample(clip: &MotionClip, target_fps: u32) -> crate::Result<MotionClip> {
    clip.resample(target_fps)
}
