#![allow(dead_code)]

use std::f64::consts::PI;

use keyloom_core::{MotionClip, Skeleton};

type Q = [f64; 4];
type V = [f64; 3];

fn hamilton(a: Q, b: Q) -> Q {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn unit(q: Q) -> Q {
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / n)
}

/// `v` rotated by `q` as `q (0, v) q*`.
fn rotate(q: Q, v: V) -> V {
    let conj = [q[0], -q[1], -q[2], -q[3]];
    let r = hamilton(hamilton(q, [0.0, v[0], v[1], v[2]]), conj);
    [r[1], r[2], r[3]]
}

/// Global positions and quaternions of every frame, joint by joint.
pub fn oracle_fk(clip: &MotionClip) -> Vec<(Vec<V>, Vec<Q>)> {
    let sk: &Skeleton = &clip.skeleton;
    let j = sk.parents.len();
    (0..clip.root_positions.len())
        .map(|t| {
            let mut pos: Vec<V> = Vec::with_capacity(j);
            let mut rot: Vec<Q> = Vec::with_capacity(j);
            for k in 0..j {
                let local = unit(clip.local_rotations[t * j + k].to_array());
                if sk.parents[k] < 0 {
                    pos.push(clip.root_positions[t]);
                    rot.push(local);
                } else {
                    let p = sk.parents[k] as usize;
                    let off = rotate(rot[p], sk.offsets[k]);
                    pos.push([pos[p][0] + off[0], pos[p][1] + off[1], pos[p][2] + off[2]]);
                    rot.push(hamilton(rot[p], local));
                }
            }
            (pos, rot)
        })
        .collect()
}

pub fn oracle_l2p(pred: &MotionClip, truth: &MotionClip) -> f64 {
    let (a, b) = (oracle_fk(pred), oracle_fk(truth));
    let mut total = 0.0;
    for t in 0..a.len() {
        let mut sq = 0.0;
        for k in 0..a[t].0.len() {
            for c in 0..3 {
                sq += (a[t].0[k][c] - b[t].0[k][c]).powi(2);
            }
        }
        total += sq.sqrt();
    }
    total / a.len() as f64
}

pub fn oracle_l2q(pred: &MotionClip, truth: &MotionClip) -> f64 {
    let (a, b) = (oracle_fk(pred), oracle_fk(truth));
    let mut total = 0.0;
    for t in 0..a.len() {
        let mut sq = 0.0;
        for k in 0..a[t].1.len() {
            let (p, q) = (a[t].1[k], b[t].1[k]);
            let minus: f64 = (0..4).map(|c| (p[c] - q[c]).powi(2)).sum();
            let plus: f64 = (0..4).map(|c| (p[c] + q[c]).powi(2)).sum();
            sq += minus.min(plus);
        }
        total += sq.sqrt();
    }
    total / a.len() as f64
}

/// Power-weighted 1-Wasserstein distance of normalized spectra, computed
/// with a literal O(N²) DFT.
pub fn oracle_npss_channels(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let spectrum = |x: &[f64]| -> Vec<f64> {
        let n = x.len();
        (1..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    };
    let normalize = |p: &[f64]| -> Vec<f64> {
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / p.len() as f64; p.len()]
        }
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let st = spectrum(t);
        let w: f64 = st.iter().sum();
        if w == 0.0 {
            continue;
        }
        let (np, nt) = (normalize(&spectrum(p)), normalize(&st));
        let mut cp = 0.0;
        let mut ct = 0.0;
        let mut emd = 0.0;
        for i in 0..np.len() {
            cp += np[i];
            ct += nt[i];
            emd += (cp - ct).abs();
        }
        num += w * emd;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Global-quaternion channels: truth made sign-continuous over time,
/// prediction flipped onto the truth's hemisphere, then NPSS.
pub fn oracle_npss(pred: &MotionClip, truth: &MotionClip) -> f64 {
    let (a, b) = (oracle_fk(pred), oracle_fk(truth));
    let n = a.len();
    let j = a[0].1.len();
    let dot = |x: Q, y: Q| (0..4).map(|c| x[c] * y[c]).sum::<f64>();
    let mut pc = vec![vec![0.0; n]; 4 * j];
    let mut tc = vec![vec![0.0; n]; 4 * j];
    for k in 0..j {
        let mut prev: Option<Q> = None;
        for t in 0..n {
            let mut q = b[t].1[k];
            if let Some(p) = prev {
                if dot(q, p) < 0.0 {
                    q = q.map(|x| -x);
                }
            }
            prev = Some(q);
            let mut r = a[t].1[k];
            if dot(r, q) < 0.0 {
                r = r.map(|x| -x);
            }
            for c in 0..4 {
                tc[4 * k + c][t] = q[c];
                pc[4 * k + c][t] = r[c];
            }
        }
    }
    oracle_npss_channels(&pc, &tc)
}
