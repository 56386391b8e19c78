//! The `.klm` clip container.
//!
//! Layout (little-endian): `"KLM1"`, `u32` version = 1, then the payload
//! `u32 J, u32 N, u32 fps`, J length-prefixed UTF-8 joint names, `i32 × J`
//! parents, `f64 × 3J` offsets, `f64 × 3N` root positions, `f64 × 4NJ` local
//! rotations `(w, x, y, z)`, and finally a CRC32 of the payload.

use std::path::Path;

use crate::container::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::kinematics::Quat;

use super::clip::{MotionClip, Skeleton};

pub const CLIP_MAGIC: &[u8; 4] = b"KLM1";
pub const CLIP_VERSION: u32 = 1;

pub fn encode_clip(clip: &MotionClip) -> Vec<u8> {
    let s = &clip.skeleton;
    let mut w = Writer::new();
    w.u32(s.len() as u32);
    w.u32(clip.len() as u32);
    w.u32(clip.fps);
    for name in &s.joint_names {
        w.str(name);
    }
    for &p in &s.parents {
        w.i32(p);
    }
    for o in &s.offsets {
        w.f64s(o);
    }
    for r in &clip.root_positions {
        w.f64s(r);
    }
    for q in &clip.local_rotations {
        w.f64s(&q.to_array());
    }
    w.finish(CLIP_MAGIC, CLIP_VERSION)
}

pub fn decode_clip(bytes: &[u8]) -> Result<MotionClip> {
    let mut r = Reader::open(bytes, CLIP_MAGIC, CLIP_VERSION)?;
    let j = r.u32()? as usize;
    let n = r.u32()? as usize;
    let fps = r.u32()?;
    let names = (0..j).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let parents = (0..j).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
    let offsets = r
        .f64s(3 * j)?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let roots = r
        .f64s(3 * n)?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let rotations = r
        .f64s(4 * n * j)?
        .chunks_exact(4)
        .map(|c| Quat::new(c[0], c[1], c[2], c[3]))
        .collect();
    r.finish()?;
    let skeleton = Skeleton::new(names, parents, offsets)
        .map_err(|e| Error::Format(format!("invalid skeleton: {e}")))?;
    MotionClip::new(skeleton, fps, roots, rotations)
        .map_err(|e| Error::Format(format!("invalid clip: {e}")))
}

pub fn save_clip(clip: &MotionClip, path: &Path) -> Result<()> {
    write_atomic(path, &encode_clip(clip))
}

pub fn load_clip(path: &Path) -> Result<MotionClip> {
    decode_clip(&std::fs::read(path)?)
}
