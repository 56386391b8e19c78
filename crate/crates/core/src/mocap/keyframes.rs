use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Quat, Vec3};

use super::clip::{MotionClip, Skeleton};

/// How keyframes are picked from a clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KeyframePolicy {
    /// Every `interval` frames from 0, plus the last frame.
    Uniform { interval: usize },
    /// Training-time sampling: a count drawn from `[⌊N/24⌋, ⌊N/4⌋]` (at least
    /// the two endpoints) with the interior frames chosen without replacement.
    RandomTraining { seed: u64 },
    /// The first `context` frames plus the last frame.
    Completion { context: usize },
    /// An explicit list; must contain 0 and N−1.
    Explicit(Vec<usize>),
}

/// Keyframe indices with the poses at those frames.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeSet {
    pub skeleton: Skeleton,
    /// Length of the sequence the keyframes belong to.
    pub len: usize,
    pub indices: Vec<usize>,
    pub root_positions: Vec<Vec3>,
    /// Row-major `keyframes × joints`.
    pub local_rotations: Vec<Quat>,
}

impl KeyframeSet {
    pub fn from_indices(clip: &MotionClip, indices: Vec<usize>) -> Result<Self> {
        let n = clip.len();
        validate_indices(&indices, n)?;
        let root_positions = indices.iter().map(|&t| clip.root_positions[t]).collect();
        let local_rotations = indices
            .iter()
            .flat_map(|&t| clip.frame_rotations(t).iter().copied())
            .collect();
        Ok(Self {
            skeleton: clip.skeleton.clone(),
            len: n,
            indices,
            root_positions,
            local_rotations,
        })
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn rotations(&self, k: usize) -> &[Quat] {
        let j = self.skeleton.len();
        &self.local_rotations[k * j..(k + 1) * j]
    }

    /// Frames that are not keyframes, in increasing order.
    pub fn targets(&self) -> Vec<usize> {
        let mut is_key = vec![false; self.len];
        for &t in &self.indices {
            is_key[t] = true;
        }
        (0..self.len).filter(|&t| !is_key[t]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_indices(&self.indices, self.len)?;
        let j = self.skeleton.len();
        if self.root_positions.len() != self.indices.len()
            || self.local_rotations.len() != self.indices.len() * j
        {
            return Err(Error::Contract("keyframe poses do not match the index list".into()));
        }
        Ok(())
    }
}

fn validate_indices(indices: &[usize], n: usize) -> Result<()> {
    if indices.len() < 2 {
        return Err(Error::DegeneratePolicy(format!(
            "need at least 2 keyframes, got {}",
            indices.len()
        )));
    }
    if indices[0] != 0 || *indices.last().unwrap() != n - 1 {
        return Err(Error::DegeneratePolicy(format!(
            "keyframes must start at 0 and end at {}, got {indices:?}",
            n - 1
        )));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegeneratePolicy(format!(
            "keyframe indices must be strictly increasing: {indices:?}"
        )));
    }
    Ok(())
}

/// Keyframe-count divisors of the training policy: between `⌊n/24⌋` and `⌊n/4⌋` keyframes.
pub const TRAINING_DIVISORS: (usize, usize) = (24, 4);

/// Inclusive keyframe-count bracket for training samples of length `n`.
pub fn training_count_bracket(n: usize) -> (usize, usize) {
    count_bracket(n, TRAINING_DIVISORS)
}

/// `[⌊n/lo_div⌋, ⌊n/hi_div⌋]`, raised to at least the two endpoints and capped at `n`.
pub fn count_bracket(n: usize, (lo_div, hi_div): (usize, usize)) -> (usize, usize) {
    let lo = (n / lo_div.max(1)).max(2);
    let hi = (n / hi_div.max(1)).max(lo);
    (lo.min(n), hi.min(n))
}

/// Draw training keyframe indices for a sequence of `n` frames.
pub fn sample_training_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    sample_keyframe_indices(n, TRAINING_DIVISORS, rng)
}

/// Endpoints plus a uniformly drawn number of distinct interior frames, the
/// count taken from [`count_bracket`].
pub fn sample_keyframe_indices<R: Rng + ?Sized>(
    n: usize,
    divisors: (usize, usize),
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::DegeneratePolicy(format!("cannot key a {n}-frame sequence")));
    }
    let (lo, hi) = count_bracket(n, divisors);
    let count = rng.random_range(lo..=hi);
    let mut indices: Vec<usize> = index::sample(rng, n - 2, count - 2)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    indices.push(0);
    indices.push(n - 1);
    indices.sort_unstable();
    Ok(indices)
}

pub fn keyframe_indices(n: usize, policy: &KeyframePolicy) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::DegeneratePolicy(format!("cannot key a {n}-frame sequence")));
    }
    let indices = match policy {
        KeyframePolicy::Uniform { interval } => {
            if *interval == 0 || *interval >= n {
                return Err(Error::DegeneratePolicy(format!(
                    "interval {interval} is not in [1, {})",
                    n
                )));
            }
            let mut v: Vec<usize> = (0..n).step_by(*interval).collect();
            if *v.last().unwrap() != n - 1 {
                v.push(n - 1);
            }
            v
        }
        KeyframePolicy::RandomTraining { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            sample_training_indices(n, &mut rng)?
        }
        KeyframePolicy::Completion { context } => {
            if *context == 0 || *context >= n {
                return Err(Error::DegeneratePolicy(format!(
                    "completion context {context} is not in [1, {})",
                    n
                )));
            }
            let mut v: Vec<usize> = (0..*context).collect();
            v.push(n - 1);
            v
        }
        KeyframePolicy::Explicit(list) => {
            if let Some(bad) = list.iter().find(|&&t| t >= n) {
                return Err(Error::DegeneratePolicy(format!(
                    "keyframe {bad} is outside a {n}-frame clip"
                )));
            }
            list.clone()
        }
    };
    validate_indices(&indices, n)?;
    Ok(indices)
}

pub fn make_keyframes(clip: &MotionClip, policy: &KeyframePolicy) -> Result<KeyframeSet> {
    let indices = keyframe_indices(clip.len(), policy)?;
    KeyframeSet::from_indices(clip, indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_interval_fifteen() {
        let v = keyframe_indices(121, &KeyframePolicy::Uniform { interval: 15 }).unwrap();
        assert_eq!(v, vec![0, 15, 30, 45, 60, 75, 90, 105, 120]);
        let v = keyframe_indices(40, &KeyframePolicy::Uniform { interval: 15 }).unwrap();
        assert_eq!(v, vec![0, 15, 30, 39]);
        assert!(keyframe_indices(10, &KeyframePolicy::Uniform { interval: 10 }).is_err());
        assert!(keyframe_indices(10, &KeyframePolicy::Uniform { interval: 0 }).is_err());
    }

    #[test]
    fn completion_context() {
        let v = keyframe_indices(40, &KeyframePolicy::Completion { context: 10 }).unwrap();
        assert_eq!(v, vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 39]);
        assert!(keyframe_indices(40, &KeyframePolicy::Completion { context: 41 }).is_err());
    }

    #[test]
    fn training_bracket_for_120_frames() {
        assert_eq!(training_count_bracket(120), (5, 30));
        for seed in 0..200 {
            let v = keyframe_indices(120, &KeyframePolicy::RandomTraining { seed }).unwrap();
            assert!((5..=30).contains(&v.len()), "{}", v.len());
        }
        // Short clips still keep both endpoints.
        assert_eq!(training_count_bracket(30), (2, 7));
        assert_eq!(training_count_bracket(3), (2, 2));
    }

    #[test]
    fn explicit_lists_are_checked() {
        assert!(keyframe_indices(10, &KeyframePolicy::Explicit(vec![0, 5, 9])).is_ok());
        assert!(keyframe_indices(10, &KeyframePolicy::Explicit(vec![0, 5])).is_err());
        assert!(keyframe_indices(10, &KeyframePolicy::Explicit(vec![0, 5, 5, 9])).is_err());
        assert!(keyframe_indices(10, &KeyframePolicy::Explicit(vec![0, 12])).is_err());
    }

    fn policy() -> impl Strategy<Value = KeyframePolicy> {
        prop_oneof![
            (1usize..40).prop_map(|interval| KeyframePolicy::Uniform { interval }),
            any::<u64>().prop_map(|seed| KeyframePolicy::RandomTraining { seed }),
            (1usize..40).prop_map(|context| KeyframePolicy::Completion { context }),
        ]
    }

    proptest! {
        #[test]
        fn keyframes_always_span_the_clip(n in 2usize..200, policy in policy()) {
            if let Ok(v) = keyframe_indices(n, &policy) {
                prop_assert_eq!(v[0], 0);
                prop_assert_eq!(*v.last().unwrap(), n - 1);
                prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(v.iter().all(|&t| t < n));
            }
        }

        #[test]
        fn random_training_is_deterministic(n in 2usize..200, seed in any::<u64>()) {
            let p = KeyframePolicy::RandomTraining { seed };
            prop_assert_eq!(keyframe_indices(n, &p).unwrap(), keyframe_indices(n, &p).unwrap());
        }
    }
}
