use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::kinematics::Quat;
use crate::mocap::{make_keyframes, KeyframePolicy, KeyframeSet, MotionClip, Skeleton};
use crate::synthetic::{branching_skeleton, piecewise_linear_clip, sinusoidal_clip};
use crate::training::Dataset;
use crate::verify::{random_clip, random_skeleton};

fn still_clip(sk: &Skeleton, frames: usize, root: [f64; 3]) -> MotionClip {
    let rots = vec![Quat::IDENTITY; frames * sk.len()];
    MotionClip::new(sk.clone(), 30, vec![root; frames], rots).unwrap()
}

#[test]
fn identical_clips_score_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sk = random_skeleton(&mut rng, 4);
    let c = random_clip(&mut rng, &sk, 10).unwrap();
    let m = all_metrics(&c, &c).unwrap();
    assert_eq!((m.l2p, m.l2q, m.npss), (0.0, 0.0, 0.0));
    assert!(offset_curve(&c, &c).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn constant_position_error_three_four_five() {
    let sk = Skeleton::chain(1, [0.0; 3]);
    let truth = still_clip(&sk, 6, [1.0, 1.0, 1.0]);
    let pred = still_clip(&sk, 6, [4.0, 5.0, 1.0]);
    assert!((l2p(&pred, &truth).unwrap() - 5.0).abs() < 1e-15);
    assert_eq!(l2q(&pred, &truth).unwrap(), 0.0);
}

#[test]
fn l2q_ignores_quaternion_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sk = random_skeleton(&mut rng, 3);
    let truth = random_clip(&mut rng, &sk, 8).unwrap();
    let mut pred = truth.clone();
    for q in pred.local_rotations.iter_mut().step_by(2) {
        *q = q.scale(-1.0);
    }
    assert!(l2q(&pred, &truth).unwrap() < 1e-12);
    assert!(npss(&pred, &truth).unwrap() < 1e-12);
}

#[test]
fn mismatches_are_errors() {
    let sk = Skeleton::chain(2, [0.0, 1.0, 0.0]);
    let a = still_clip(&sk, 6, [0.0; 3]);
    let b = still_clip(&sk, 7, [0.0; 3]);
    assert!(matches!(l2p(&a, &b), Err(Error::Metric(_))));
    let other = still_clip(&Skeleton::chain(2, [0.0, 2.0, 0.0]), 6, [0.0; 3]);
    assert!(matches!(l2q(&a, &other), Err(Error::Metric(_))));
    let short = still_clip(&sk, 3, [0.0; 3]);
    assert!(matches!(npss(&short, &short), Err(Error::Metric(_))));
    assert!(npss(&a, &a).is_ok());
}

fn sinusoid(n: usize, cycles: f64, amp: f64, mean: f64) -> Vec<f64> {
    (0..n).map(|t| mean + amp * (2.0 * PI * cycles * t as f64 / n as f64).sin()).collect()
}

#[test]
fn npss_one_versus_two_cycles() {
    // All truth power sits in bin 1 and all prediction power in bin 2, so the
    // cumulative distributions differ by 1 at bin 1 only.
    let truth = vec![sinusoid(32, 1.0, 1.0, 0.0)];
    let pred = vec![sinusoid(32, 2.0, 1.0, 0.0)];
    assert!((npss_channels(&pred, &truth).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn npss_ignores_amplitude_about_the_mean_and_mean_shifts() {
    let truth: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let a = sinusoid(24, 1.0 + c as f64, 0.3, 0.1 * c as f64);
            let b = sinusoid(24, 3.0, 0.1, 0.0);
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        })
        .collect();
    let doubled: Vec<Vec<f64>> = truth
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|x| m + 2.0 * (x - m)).collect()
        })
        .collect();
    assert!(npss_channels(&doubled, &truth).unwrap() < 1e-12);
    let shifted: Vec<Vec<f64>> = truth.iter().map(|c| c.iter().map(|x| x + 7.5).collect()).collect();
    assert!(npss_channels(&shifted, &truth).unwrap() < 1e-12);
    assert_eq!(npss_channels(&truth, &truth).unwrap(), 0.0);
}

#[test]
fn npss_of_motionless_truth_is_zero() {
    let flat = vec![vec![0.5; 8]];
    assert_eq!(npss_channels(&[sinusoid(8, 1.0, 1.0, 0.0)], &flat).unwrap(), 0.0);
}

#[test]
fn npss_of_motionless_prediction_against_moving_truth() {
    // A powerless prediction spreads its distribution uniformly over the bins.
    let truth = vec![sinusoid(8, 1.0, 1.0, 0.0)];
    let pred = vec![vec![0.0; 8]];
    // Bins 1..=4; truth cdf (1,1,1,1), uniform cdf (.25,.5,.75,1).
    assert!((npss_channels(&pred, &truth).unwrap() - 1.5).abs() < 1e-12);
}

fn keys(clip: &MotionClip, indices: Vec<usize>) -> KeyframeSet {
    KeyframeSet::from_indices(clip, indices).unwrap()
}

#[test]
fn lerp_midpoint_of_roots_and_rotations() {
    let sk = Skeleton::chain(1, [0.0; 3]);
    let mut roots = vec![[0.0; 3]; 11];
    roots[10] = [10.0, 0.0, 0.0];
    let mut rots = vec![Quat::IDENTITY; 11];
    rots[10] = Quat::from_axis_angle([0.0, 0.0, 1.0], PI / 2.0);
    let clip = MotionClip::new(sk, 30, roots, rots).unwrap();
    let out = lerp_baseline(&keys(&clip, vec![0, 10]), 30).unwrap();
    assert_eq!(out.len(), 11);
    assert_eq!(out.root_positions[5], [5.0, 0.0, 0.0]);
    let q = out.rotation(5, 0).to_array();
    let expect = [(PI / 8.0).cos(), 0.0, 0.0, (PI / 8.0).sin()];
    for c in 0..4 {
        assert!((q[c] - expect[c]).abs() < 1e-12, "{q:?}");
    }
    assert!((expect[0] - 0.92388).abs() < 1e-5 && (expect[3] - 0.38268).abs() < 1e-5);
}

#[test]
fn lerp_takes_the_short_arc() {
    let sk = Skeleton::chain(1, [0.0; 3]);
    let a = Quat::from_axis_angle([0.0, 1.0, 0.0], 0.2);
    let b = Quat::from_axis_angle([0.0, 1.0, 0.0], 0.6).scale(-1.0);
    let clip = MotionClip::new(sk, 30, vec![[0.0; 3]; 3], vec![a, a, b]).unwrap();
    let out = lerp_baseline(&keys(&clip, vec![0, 2]), 30).unwrap();
    let mid = out.rotation(1, 0).aligned_to(Quat::IDENTITY).to_array();
    let expect = Quat::from_axis_angle([0.0, 1.0, 0.0], 0.4).to_array();
    for c in 0..4 {
        assert!((mid[c] - expect[c]).abs() < 1e-12);
    }
}

#[test]
fn lerp_reproduces_keyframes_and_full_key_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sk = random_skeleton(&mut rng, 4);
    let clip = random_clip(&mut rng, &sk, 9).unwrap();
    let all = lerp_baseline(&keys(&clip, (0..9).collect()), 30).unwrap();
    assert_eq!(all, clip);
    let ks = keys(&clip, vec![0, 3, 4, 8]);
    let out = lerp_baseline(&ks, 30).unwrap();
    for &t in &ks.indices {
        assert_eq!(out.root_positions[t], clip.root_positions[t]);
        assert_eq!(out.frame_rotations(t), clip.frame_rotations(t));
    }
}

#[test]
fn lerp_is_exact_on_piecewise_linear_motion() {
    let sk = branching_skeleton(5, 1);
    let clip = piecewise_linear_clip(&sk, 121, &[0, 15, 45, 60, 120], 9).unwrap();
    let out = lerp_baseline(&make_keyframes(&clip, &KeyframePolicy::Uniform { interval: 15 }).unwrap(), 30).unwrap();
    assert!(l2p(&out, &clip).unwrap() < 1e-9);
}

/// Replays the ground truth whose keyframes match the query.
struct Oracle(Vec<MotionClip>);

impl Interpolator for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn interpolate(&self, keyframes: &KeyframeSet, _fps: u32) -> crate::Result<MotionClip> {
        self.0
            .iter()
            .find(|c| {
                c.len() >= keyframes.len
                    && keyframes.indices.iter().zip(&keyframes.root_positions).all(|(&t, r)| c.root_positions[t] == *r)
                    && (0..keyframes.count()).all(|k| keyframes.rotations(k) == c.frame_rotations(keyframes.indices[k]))
            })
            .map(|c| c.window(0, keyframes.len).unwrap())
            .ok_or_else(|| Error::Contract("unknown clip".into()))
    }
}

fn eval_dataset() -> Dataset {
    let sk = branching_skeleton(4, 2);
    let clips: Vec<MotionClip> = (0..3).map(|s| sinusoidal_clip(&sk, 130 - 10 * s as usize, 30, s).unwrap()).collect();
    Dataset::new((0..3).map(|i| format!("clip{i}")).collect(), clips).unwrap()
}

#[test]
fn oracle_model_scores_zero_and_baseline_matches_direct_calls() {
    let ds = eval_dataset();
    let oracle = Oracle(ds.clips.clone());
    let (report, curves) = evaluate(Some(&oracle), &ds, &DEFAULT_INTERVALS, EVAL_WINDOW).unwrap();
    assert_eq!(report.per_clip.len(), 9);
    assert_eq!(report.aggregate.len(), 3);
    assert_eq!(curves.len(), 18);
    for row in &report.per_clip {
        assert_eq!(row.model, Some(Metrics::default()));
        let c = &ds.clips[ds.names.iter().position(|n| *n == row.clip).unwrap()];
        let truth = c.window(0, EVAL_WINDOW.min(c.len())).unwrap();
        assert_eq!(row.frames, truth.len());
        let ks = make_keyframes(&truth, &KeyframePolicy::Uniform { interval: row.interval }).unwrap();
        let direct = all_metrics(&lerp_baseline(&ks, 30).unwrap(), &truth).unwrap();
        assert_eq!(row.baseline, direct);
    }
    for c in curves.iter().filter(|c| c.method == "oracle") {
        assert!(c.offsets.iter().all(|&v| v == 0.0));
    }
    assert_eq!(report.per_clip[0].clip, "clip0");
    assert_eq!(report.per_clip[0].interval, 5);
    assert_eq!(report.per_clip[1].interval, 15);
    let lerp15: Vec<f64> = report.per_clip.iter().filter(|r| r.interval == 15).map(|r| r.baseline.l2p).collect();
    let agg = report.aggregate.iter().find(|a| a.interval == 15).unwrap();
    assert!((agg.baseline.l2p - lerp15.iter().sum::<f64>() / 3.0).abs() < 1e-15);
}

#[test]
fn baseline_only_and_output_files() {
    let ds = eval_dataset();
    let (report, curves) = evaluate(None, &ds, &[15], EVAL_WINDOW).unwrap();
    assert!(report.per_clip.iter().all(|r| r.model.is_none()));
    assert!(report.aggregate[0].model.is_none());
    assert!(curves.iter().all(|c| c.method == "lerp"));
    let dir = tempfile::tempdir().unwrap();
    let paths = write_report(&report, &curves, dir.path()).unwrap();
    let back: EvalReport = serde_json::from_slice(&std::fs::read(&paths[0]).unwrap()).unwrap();
    assert_eq!(back, report);
    let table = std::fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(table.lines().count(), 1 + 3);
    let offsets = std::fs::read_to_string(&paths[2]).unwrap();
    let frames: usize = report.per_clip.iter().map(|r| r.frames).sum();
    assert_eq!(offsets.lines().count(), 1 + frames);
}

#[test]
fn evaluation_errors() {
    let ds = eval_dataset();
    assert!(matches!(evaluate(None, &Dataset::default(), &[5], EVAL_WINDOW), Err(Error::Config(_))));
    assert!(matches!(evaluate(None, &ds, &[], EVAL_WINDOW), Err(Error::Config(_))));
    assert!(matches!(evaluate(None, &ds, &[200], EVAL_WINDOW), Err(Error::DegeneratePolicy(_))));
}

#[test]
fn evaluation_is_independent_of_thread_count() {
    let ds = eval_dataset();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = one.install(|| evaluate(None, &ds, &DEFAULT_INTERVALS, EVAL_WINDOW).unwrap());
    let b = evaluate(None, &ds, &DEFAULT_INTERVALS, EVAL_WINDOW).unwrap();
    assert_eq!(a, b);
}
