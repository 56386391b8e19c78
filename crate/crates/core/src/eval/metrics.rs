use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{fk_batch, GlobalPose, Quat};
use crate::mocap::MotionClip;

/// The three pose-error metrics of one prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2p: f64,
    pub l2q: f64,
    pub npss: f64,
}

fn check_pair(pred: &MotionClip, truth: &MotionClip) -> Result<()> {
    if pred.skeleton.parents != truth.skeleton.parents || pred.skeleton.offsets != truth.skeleton.offsets {
        return Err(Error::Metric("prediction and ground truth use different skeletons".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Metric(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Ground-truth global quaternions made continuous over time, and the
/// prediction's global quaternions flipped onto the truth's hemisphere.
fn aligned_global_rotations(pred: &[GlobalPose], truth: &[GlobalPose]) -> (Vec<Vec<Quat>>, Vec<Vec<Quat>>) {
    let mut t_rot: Vec<Vec<Quat>> = truth.iter().map(|p| p.rotations.clone()).collect();
    for t in 1..t_rot.len() {
        for j in 0..t_rot[t].len() {
            t_rot[t][j] = t_rot[t][j].aligned_to(t_rot[t - 1][j]);
        }
    }
    let p_rot = pred
        .iter()
        .zip(&t_rot)
        .map(|(p, tr)| p.rotations.iter().zip(tr).map(|(q, r)| q.aligned_to(*r)).collect())
        .collect();
    (p_rot, t_rot)
}

/// Mean over frames of the ℓ2 norm of the flattened global-position error.
pub fn l2p(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    let (p, t) = (fk_batch(pred)?, fk_batch(truth)?);
    let total: f64 = p
        .iter()
        .zip(&t)
        .map(|(a, b)| {
            a.positions
                .iter()
                .zip(&b.positions)
                .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).powi(2)))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean over frames of the ℓ2 norm of the flattened global-quaternion error,
/// each predicted quaternion taken on the hemisphere of its target.
pub fn l2q(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    let (p, t) = aligned_global_rotations(&fk_batch(pred)?, &fk_batch(truth)?);
    let total: f64 = p
        .iter()
        .zip(&t)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.to_array().into_iter().zip(y.to_array()).map(|(u, v)| (u - v).powi(2)))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Power at frequency bins `1..=N/2` of a real signal.
fn power_spectrum(planner: &mut FftPlanner<f64>, signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// 1-Wasserstein distance between two unit-sum spectra on the same bins.
fn spectral_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        d += (ca - cb).abs();
    }
    d
}

/// Normalize to unit sum; a signal with no power maps to the uniform spectrum.
fn unit_sum(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}

/// Power-weighted earth-mover distance between per-channel spectra.
///
/// `pred` and `truth` are `channels` series of equal length `N ≥ 4`. Each
/// channel's power spectrum over bins `1..=N/2` is normalized to unit sum,
/// channels are compared by the summed absolute difference of cumulative
/// sums, and channel distances are averaged with weights equal to the total
/// ground-truth power of the channel. Returns 0 when the ground truth carries
/// no power at all.
pub fn npss_channels(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Metric("channel counts differ".into()));
    }
    let n = truth.first().map_or(0, Vec::len);
    if n < 4 {
        return Err(Error::Metric(format!("NPSS needs at least 4 frames, got {n}")));
    }
    if pred.iter().chain(truth).any(|c| c.len() != n) {
        return Err(Error::Metric("channels differ in length".into()));
    }
    let mut planner = FftPlanner::new();
    let (mut weighted, mut weights) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let pt = power_spectrum(&mut planner, t);
        let w: f64 = pt.iter().sum();
        if w == 0.0 {
            continue;
        }
        let pp = power_spectrum(&mut planner, p);
        weighted += w * spectral_distance(&unit_sum(&pp), &unit_sum(&pt));
        weights += w;
    }
    Ok(if weights > 0.0 { weighted / weights } else { 0.0 })
}

/// Flattened global-quaternion channels (`4J` series over time).
fn quaternion_channels(rot: &[Vec<Quat>]) -> Vec<Vec<f64>> {
    let j = rot.first().map_or(0, Vec::len);
    (0..4 * j)
        .map(|c| rot.iter().map(|frame| frame[c / 4].to_array()[c % 4]).collect())
        .collect()
}

/// NPSS over the global quaternion channels.
pub fn npss(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    if truth.len() < 4 {
        return Err(Error::Metric(format!("NPSS needs at least 4 frames, got {}", truth.len())));
    }
    let (p, t) = aligned_global_rotations(&fk_batch(pred)?, &fk_batch(truth)?);
    npss_channels(&quaternion_channels(&p), &quaternion_channels(&t))
}

pub fn all_metrics(pred: &MotionClip, truth: &MotionClip) -> Result<Metrics> {
    Ok(Metrics {
        l2p: l2p(pred, truth)?,
        l2q: l2q(pred, truth)?,
        npss: npss(pred, truth)?,
    })
}

/// Per-frame ℓ1 distance between the pose vectors (global positions followed
/// by hemisphere-aligned global quaternions) of prediction and ground truth.
pub fn offset_curve(pred: &MotionClip, truth: &MotionClip) -> Result<Vec<f64>> {
    check_pair(pred, truth)?;
    let (pp, tp) = (fk_batch(pred)?, fk_batch(truth)?);
    let (pr, tr) = aligned_global_rotations(&pp, &tp);
    Ok((0..pred.len())
        .map(|t| {
            let pos: f64 = pp[t]
                .positions
                .iter()
                .zip(&tp[t].positions)
                .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
                .sum();
            let rot: f64 = pr[t]
                .iter()
                .zip(&tr[t])
                .flat_map(|(a, b)| a.to_array().into_iter().zip(b.to_array()).map(|(u, v)| (u - v).abs()))
                .sum();
            pos + rot
        })
        .collect())
}
