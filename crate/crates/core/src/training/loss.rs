use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kinematics::{fk_batch, forward_kinematics, Quat, Vec3};
use crate::mocap::{MotionClip, Skeleton};
use crate::model::SeqRcState;

/// The four loss terms and the weights that combined them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_root: f64,
    pub l_quat: f64,
    pub l_fkp: f64,
    pub l_fkq: f64,
    pub alpha_l: f64,
    pub alpha_g: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(l_root: f64, l_quat: f64, l_fkp: f64, l_fkq: f64, alpha_l: f64, alpha_g: f64) -> Self {
        Self {
            l_root,
            l_quat,
            l_fkp,
            l_fkq,
            alpha_l,
            alpha_g,
            total: alpha_l * (l_root + l_quat) + alpha_g * (l_fkp + l_fkq),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_root, self.l_quat, self.l_fkp, self.l_fkq, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Component-wise mean of several breakdowns sharing the same weights.
    pub fn mean(parts: &[LossBreakdown]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("cannot average an empty set of losses".into()))?;
        let k = parts.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / k;
        Ok(Self::compose(
            avg(|b| b.l_root),
            avg(|b| b.l_quat),
            avg(|b| b.l_fkp),
            avg(|b| b.l_fkq),
            first.alpha_l,
            first.alpha_g,
        ))
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `(1/N) Σ_t ‖p̂_t − p_t‖₁` over root positions.
pub fn loss_root(pred: &[Vec3], truth: &[Vec3]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("root loss", &[pred.len(), 3], &[truth.len(), 3]));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| l1(p, t)).sum::<f64>() / pred.len() as f64)
}

/// `(1/NJ) Σ ‖q̂ − q‖₁` against raw, unnormalized predictions.
pub fn loss_quat(pred_raw: &[[f64; 4]], truth: &[Quat]) -> Result<f64> {
    if pred_raw.len() != truth.len() || pred_raw.is_empty() {
        return Err(Error::shape("quaternion loss", &[pred_raw.len(), 4], &[truth.len(), 4]));
    }
    Ok(pred_raw.iter().zip(truth).map(|(p, t)| l1(p, &t.to_array())).sum::<f64>() / pred_raw.len() as f64)
}

/// Global-position and global-rotation losses after forward kinematics.
///
/// Predicted rotations are normalized before FK; each predicted global
/// quaternion is flipped onto the hemisphere of its ground-truth counterpart.
pub fn loss_fk(pred_roots: &[Vec3], pred_rotations: &[Quat], truth: &MotionClip) -> Result<(f64, f64)> {
    let j = truth.joints();
    let n = truth.len();
    if pred_roots.len() != n || pred_rotations.len() != n * j {
        return Err(Error::shape("FK loss", &[pred_roots.len(), pred_rotations.len()], &[n, n * j]));
    }
    let truth_poses = fk_batch(truth)?;
    let (mut lp, mut lq) = (0.0, 0.0);
    for (t, tp) in truth_poses.iter().enumerate() {
        let pp = forward_kinematics(&truth.skeleton, pred_roots[t], &pred_rotations[t * j..(t + 1) * j])?;
        for k in 0..j {
            lp += l1(&pp.positions[k], &tp.positions[k]);
            let q = pp.rotations[k].aligned_to(tp.rotations[k]);
            lq += l1(&q.to_array(), &tp.rotations[k].to_array());
        }
    }
    let nj = (n * j) as f64;
    Ok((lp / nj, lq / nj))
}

/// Ground truth for one training window, in the network's normalized space.
#[derive(Clone, Debug)]
pub struct TrainingTargets {
    /// `N × 3` normalized root positions.
    pub roots: Tensor,
    /// `N × 4J` local quaternions.
    pub quats: Tensor,
    /// `N × 3J` normalized global positions.
    pub positions: Tensor,
    /// `N × 4J` global quaternions.
    pub rotations: Tensor,
}

impl TrainingTargets {
    pub fn new(clip: &MotionClip, state: &SeqRcState) -> Result<Self> {
        let n = clip.len();
        let j = clip.joints();
        let mut roots = Vec::with_capacity(n * 3);
        let mut quats = Vec::with_capacity(n * 4 * j);
        let mut positions = Vec::with_capacity(n * 3 * j);
        let mut rotations = Vec::with_capacity(n * 4 * j);
        for t in 0..n {
            let local = clip.frame_rotations(t);
            roots.extend(state.normalize_root(clip.root_positions[t]));
            quats.extend(local.iter().flat_map(|q| q.to_array()));
            positions.extend(state.normalize_pose(&clip.skeleton, clip.root_positions[t], local)?);
            let pose = forward_kinematics(&clip.skeleton, [0.0; 3], local)?;
            rotations.extend(pose.rotations.iter().flat_map(|q| q.to_array()));
        }
        Ok(Self {
            roots: Tensor::matrix(n, 3, roots)?,
            quats: Tensor::matrix(n, 4 * j, quats)?,
            positions: Tensor::matrix(n, 3 * j, positions)?,
            rotations: Tensor::matrix(n, 4 * j, rotations)?,
        })
    }
}

/// Forward kinematics on the tape.
///
/// `roots` is `N × 3`, `quats_raw` is `N × 4J`; each joint's quaternion is
/// normalized before composition and bone offsets are multiplied by
/// `offset_scale`. Returns global positions `N × 3J` and rotations `N × 4J`.
pub fn fk_on_tape(
    tape: &mut Tape,
    skeleton: &Skeleton,
    roots: Var,
    quats_raw: Var,
    offset_scale: f64,
) -> Result<(Var, Var)> {
    let j = skeleton.len();
    let n = tape.shape(roots)[0];
    if tape.shape(quats_raw) != [n, 4 * j] {
        return Err(Error::shape("tape FK", &[n, 4 * j], tape.shape(quats_raw)));
    }
    let mut pos: Vec<Var> = Vec::with_capacity(j);
    let mut rot: Vec<Var> = Vec::with_capacity(j);
    for k in 0..j {
        let q = tape.slice_cols(quats_raw, 4 * k, 4)?;
        let q = tape.quat_normalize(q)?;
        match skeleton.parent(k) {
            None => {
                pos.push(roots);
                rot.push(q);
            }
            Some(p) => {
                let o = skeleton.offsets[k];
                let data = (0..n).flat_map(|_| o.map(|c| c * offset_scale)).collect();
                let offset = tape.constant(Tensor::matrix(n, 3, data)?);
                let moved = tape.quat_rotate(rot[p], offset)?;
                pos.push(tape.add(pos[p], moved)?);
                rot.push(tape.quat_mul(rot[p], q)?);
            }
        }
    }
    Ok((tape.concat_cols(&pos)?, tape.concat_cols(&rot)?))
}

/// The four loss terms of one sample as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub root: Var,
    pub quat: Var,
    pub fkp: Var,
    pub fkq: Var,
}

fn mean_l1(tape: &mut Tape, a: Var, b: Var, count: usize) -> Result<Var> {
    let d = tape.sub(a, b)?;
    let d = tape.abs(d)?;
    let s = tape.sum(d)?;
    tape.scale(s, 1.0 / count as f64)
}

/// Build the loss terms for predicted `roots` / `quats_raw` (normalized space).
pub fn loss_on_tape(
    tape: &mut Tape,
    skeleton: &Skeleton,
    pos_scale: f64,
    roots: Var,
    quats_raw: Var,
    targets: &TrainingTargets,
) -> Result<LossVars> {
    let n = targets.roots.rows();
    let nj = n * skeleton.len();
    let t_roots = tape.constant(targets.roots.clone());
    let t_quats = tape.constant(targets.quats.clone());
    let t_pos = tape.constant(targets.positions.clone());
    let root = mean_l1(tape, roots, t_roots, n)?;
    let quat = mean_l1(tape, quats_raw, t_quats, nj)?;
    let (pos, rot) = fk_on_tape(tape, skeleton, roots, quats_raw, pos_scale)?;
    let fkp = mean_l1(tape, pos, t_pos, nj)?;

    // Flip each predicted global quaternion onto its target's hemisphere.
    let signs: Vec<f64> = {
        let pred = tape.value(rot).data();
        let truth = targets.rotations.data();
        pred.chunks_exact(4)
            .zip(truth.chunks_exact(4))
            .flat_map(|(p, t)| {
                let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
                [if dot < 0.0 { -1.0 } else { 1.0 }; 4]
            })
            .collect()
    };
    let signs = tape.constant(Tensor::new(targets.rotations.shape().to_vec(), signs)?);
    let aligned = tape.mul(rot, signs)?;
    let t_rot = tape.constant(targets.rotations.clone());
    let fkq = mean_l1(tape, aligned, t_rot, nj)?;
    Ok(LossVars { root, quat, fkp, fkq })
}

/// `α_l (L_root + L_quat) + α_g (L_fkp + L_fkq)`. The global terms are left
/// off the graph entirely when `α_g = 0`.
pub fn total_on_tape(tape: &mut Tape, l: &LossVars, alpha_l: f64, alpha_g: f64) -> Result<Var> {
    let local = tape.add(l.root, l.quat)?;
    let local = tape.scale(local, alpha_l)?;
    if alpha_g == 0.0 {
        return Ok(local);
    }
    let global = tape.add(l.fkp, l.fkq)?;
    let global = tape.scale(global, alpha_g)?;
    tape.add(local, global)
}

pub fn breakdown(tape: &Tape, l: &LossVars, alpha_l: f64, alpha_g: f64) -> LossBreakdown {
    LossBreakdown::compose(
        tape.value(l.root).item(),
        tape.value(l.quat).item(),
        tape.value(l.fkp).item(),
        tape.value(l.fkq).item(),
        alpha_l,
        alpha_g,
    )
}
