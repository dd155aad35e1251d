//! Trajectory accuracy metrics.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Body pose at a timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
}

impl StampedPose {
    pub fn new(t: f64, position: Vector3<f64>, attitude: UnitQuaternion<f64>) -> Self {
        Self {
            t,
            position,
            attitude,
        }
    }

    /// `self⁻¹ · other`.
    pub fn relative(&self, other: &Self) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let inv = self.attitude.inverse();
        (inv * other.attitude, inv * (other.position - self.position))
    }
}

/// Maximum timestamp difference for associating an estimate with ground truth.
pub const MAX_TIME_DIFF: f64 = 0.01;

/// Pairs each estimate with the ground-truth pose nearest in time, within `MAX_TIME_DIFF`.
pub fn associate(est: &[StampedPose], gt: &[StampedPose]) -> Vec<(StampedPose, StampedPose)> {
    let mut out = Vec::with_capacity(est.len());
    if gt.is_empty() {
        return out;
    }
    for e in est {
        let i = gt.partition_point(|g| g.t < e.t);
        let best = [i.saturating_sub(1), i.min(gt.len() - 1)]
            .into_iter()
            .min_by(|&a, &b| (gt[a].t - e.t).abs().total_cmp(&(gt[b].t - e.t).abs()))
            .unwrap();
        if (gt[best].t - e.t).abs() <= MAX_TIME_DIFF {
            out.push((*e, gt[best]));
        }
    }
    out
}

/// Least-squares rigid transform `(R, t)` minimising `Σ|R·src + t − dst|²`.
pub fn align_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> (Rotation3<f64>, Vector3<f64>) {
    let n = src.len().max(1) as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = Rotation3::from_matrix_unchecked(u * fix * v_t);
    (r, cd - r * cs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub rmse: f64,
    pub matched: usize,
}

/// Translational RMSE after rigid alignment of the associated positions.
pub fn evaluate_ate(est: &[StampedPose], gt: &[StampedPose]) -> Result<AteReport> {
    let pairs = associate(est, gt);
    if pairs.len() < 3 {
        return Err(Error::Evaluation(format!(
            "need at least 3 time-matched poses, found {}",
            pairs.len()
        )));
    }
    let src: Vec<_> = pairs.iter().map(|(e, _)| e.position).collect();
    let dst: Vec<_> = pairs.iter().map(|(_, g)| g.position).collect();
    let (r, t) = align_rigid(&src, &dst);
    let sq: f64 = src
        .iter()
        .zip(&dst)
        .map(|(s, d)| (r * s + t - d).norm_squared())
        .sum();
    Ok(AteReport {
        rmse: (sq / pairs.len() as f64).sqrt(),
        matched: pairs.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RteReport {
    pub rmse: f64,
    pub segments: usize,
}

/// Translational RMSE of relative poses over ground-truth segments of arc length `interval`.
pub fn evaluate_rte(est: &[StampedPose], gt: &[StampedPose], interval: f64) -> Result<RteReport> {
    let pairs = associate(est, gt);
    let mut arc = Vec::with_capacity(pairs.len());
    let mut total = 0.0;
    for (i, (_, g)) in pairs.iter().enumerate() {
        if i > 0 {
            total += (g.position - pairs[i - 1].1.position).norm();
        }
        arc.push(total);
    }
    if pairs.len() < 2 || total < interval {
        return Err(Error::Evaluation(format!(
            "trajectory length {total:.3} m is shorter than the {interval} m interval"
        )));
    }
    let mut sq = 0.0;
    let mut segments = 0;
    for i in 0..pairs.len() {
        let j = arc.partition_point(|&s| s < arc[i] + interval);
        if j >= pairs.len() {
            break;
        }
        let (gq, gp) = pairs[i].1.relative(&pairs[j].1);
        let (_, ep) = pairs[i].0.relative(&pairs[j].0);
        let err = gq.inverse() * (ep - gp);
        sq += err.norm_squared();
        segments += 1;
    }
    Ok(RteReport {
        rmse: (sq / segments as f64).sqrt(),
        segments,
    })
}

/// RMSE of the position error projected on `axis`, with both trajectories anchored at the first
/// associated pose and no rotational alignment.
pub fn anchored_axis_rmse(
    est: &[StampedPose],
    gt: &[StampedPose],
    axis: &Vector3<f64>,
) -> Result<f64> {
    let pairs = associate(est, gt);
    let Some((e0, g0)) = pairs.first() else {
        return Err(Error::Evaluation("no time-matched poses".into()));
    };
    let a = axis.normalize();
    let sq: f64 = pairs
        .iter()
        .map(|(e, g)| {
            a.dot(&((e.position - e0.position) - (g.position - g0.position)))
                .powi(2)
        })
        .sum();
    Ok((sq / pairs.len() as f64).sqrt())
}
