use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mocap::{sample_keyframe_indices, KeyframeSet, MotionClip};

use super::config::TrainConfig;

/// Clips available for training, with display names.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub names: Vec<String>,
    pub clips: Vec<MotionClip>,
}

impl Dataset {
    pub fn new(names: Vec<String>, clips: Vec<MotionClip>) -> Result<Self> {
        if names.len() != clips.len() {
            return Err(Error::Contract("dataset names and clips differ in length".into()));
        }
        if clips.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let sk = &clips[0].skeleton;
        if let Some(i) = clips.iter().position(|c| c.skeleton.parents != sk.parents) {
            return Err(Error::Config(format!(
                "clip {} uses a different skeleton from clip {}",
                names[i], names[0]
            )));
        }
        Ok(Self { names, clips })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.clips.first().map_or(0, MotionClip::joints)
    }
}

/// One training window and its keyframes.
#[derive(Clone, Debug)]
pub struct Sample {
    pub clip: usize,
    pub start: usize,
    pub window: MotionClip,
    pub keyframes: KeyframeSet,
}

/// Where a sample came from, for diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct SampleInfo {
    pub clip: String,
    pub start: usize,
    pub len: usize,
    pub keyframes: Vec<usize>,
}

impl Sample {
    pub fn info(&self, dataset: &Dataset) -> SampleInfo {
        SampleInfo {
            clip: dataset.names[self.clip].clone(),
            start: self.start,
            len: self.window.len(),
            keyframes: self.keyframes.indices.clone(),
        }
    }
}

/// Window-length bracket for this dataset: the configured bracket clamped to
/// the shortest clip.
pub fn window_bracket(dataset: &Dataset, cfg: &TrainConfig) -> Result<(usize, usize)> {
    let shortest = dataset
        .clips
        .iter()
        .map(MotionClip::len)
        .min()
        .ok_or_else(|| Error::Config("dataset is empty".into()))?;
    Ok((cfg.clip_len_min.min(shortest), cfg.clip_len_max.min(shortest)))
}

/// Draw a batch: one window length shared by the batch, then per sample a
/// clip, a start frame and a random keyframe set.
pub fn sample_batch<R: Rng + ?Sized>(dataset: &Dataset, cfg: &TrainConfig, rng: &mut R) -> Result<Vec<Sample>> {
    let (lo, hi) = window_bracket(dataset, cfg)?;
    let len = rng.random_range(lo..=hi);
    (0..cfg.batch_size)
        .map(|_| {
            let clip = rng.random_range(0..dataset.len());
            let source = &dataset.clips[clip];
            let start = rng.random_range(0..=source.len() - len);
            let window = source.window(start, len)?;
            let indices = sample_keyframe_indices(len, cfg.keyframe_divisors, rng)?;
            let keyframes = KeyframeSet::from_indices(&window, indices)?;
            Ok(Sample {
                clip,
                start,
                window,
                keyframes,
            })
        })
        .collect()
}
