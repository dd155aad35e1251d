//! Motion-adaptive division of a lidar scan into sub-frames.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::ImuSample;

/// A lidar return with its capture time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPoint {
    pub t: f64,
    pub p: Vector3<f64>,
    pub intensity: f32,
}

impl TimedPoint {
    pub fn new(t: f64, p: Vector3<f64>) -> Self {
        Self {
            t,
            p,
            intensity: 0.0,
        }
    }
}

/// One full lidar sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub t_start: f64,
    pub t_end: f64,
    pub points: Vec<TimedPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionStats {
    pub sigma_acc: Vector3<f64>,
    pub sigma_gyr: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DividerConfig {
    /// Largest expected per-axis accelerometer standard deviation, m/s².
    pub sigma_acc_max: f64,
    /// Largest expected per-axis gyroscope standard deviation, rad/s.
    pub sigma_gyr_max: f64,
    pub n_max: usize,
}

impl Default for DividerConfig {
    fn default() -> Self {
        Self {
            sigma_acc_max: 5.0,
            sigma_gyr_max: 2.0,
            n_max: 4,
        }
    }
}

impl DividerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_acc_max > 0.0 && self.sigma_gyr_max > 0.0) {
            return Err(Error::InvalidConfig(
                "divider sigma maxima must be positive".into(),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidConfig(
                "divider n_max must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubFrame {
    pub t_start: f64,
    pub t_end: f64,
    pub points: Vec<TimedPoint>,
    /// Samples inside `[t_start, t_end]` plus one bracketing sample on each side.
    pub imu_window: Vec<ImuSample>,
}

/// Per-axis population standard deviation of the raw IMU measurements.
pub fn compute_motion_stats(imu_window: &[ImuSample]) -> Result<MotionStats> {
    if imu_window.len() < 2 {
        return Err(Error::InsufficientSamples {
            what: "motion statistics",
            needed: 2,
            got: imu_window.len(),
        });
    }
    let n = imu_window.len() as f64;
    let (mut ma, mut mg) = (Vector3::zeros(), Vector3::zeros());
    for s in imu_window {
        ma += s.accel;
        mg += s.gyro;
    }
    ma /= n;
    mg /= n;
    let (mut va, mut vg) = (Vector3::<f64>::zeros(), Vector3::<f64>::zeros());
    for s in imu_window {
        va += (s.accel - ma).component_mul(&(s.accel - ma));
        vg += (s.gyro - mg).component_mul(&(s.gyro - mg));
    }
    Ok(MotionStats {
        sigma_acc: (va / n).map(f64::sqrt),
        sigma_gyr: (vg / n).map(f64::sqrt),
    })
}

/// Number of sub-frames for the current scan, in `[1, n_max]`.
pub fn subframe_count(stats: &MotionStats, cfg: &DividerConfig) -> usize {
    let ratio =
        (stats.sigma_acc.max() / cfg.sigma_acc_max).max(stats.sigma_gyr.max() / cfg.sigma_gyr_max);
    let n = (cfg.n_max as f64 * ratio).ceil();
    if n.is_nan() || n < 1.0 {
        1
    } else {
        (n as usize).min(cfg.n_max)
    }
}

/// Samples covering `[t0, t1]` plus one bracketing sample on each side.
pub fn imu_window(imu: &[ImuSample], t0: f64, t1: f64) -> &[ImuSample] {
    let lo = imu.partition_point(|s| s.timestamp < t0).saturating_sub(1);
    let hi = (imu.partition_point(|s| s.timestamp <= t1) + 1).min(imu.len());
    &imu[lo..hi.max(lo)]
}

/// Splits a time-sorted scan into `n` equal-duration sub-frames.
pub fn split_scan(scan: &Scan, n: usize, imu: &[ImuSample]) -> Result<Vec<SubFrame>> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "sub-frame count must be at least 1".into(),
        ));
    }
    if let Some(i) = scan.points.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    let duration = scan.t_end - scan.t_start;
    let width = duration / n as f64;
    // Timestamps within this of a window boundary belong to the later window.
    let snap = 1e-9 * duration.abs();
    let mut frames: Vec<SubFrame> = (0..n)
        .map(|j| {
            let t_start = scan.t_start + j as f64 * width;
            let t_end = if j + 1 == n {
                scan.t_end
            } else {
                scan.t_start + (j + 1) as f64 * width
            };
            SubFrame {
                t_start,
                t_end,
                points: Vec::new(),
                imu_window: imu_window(imu, t_start, t_end).to_vec(),
            }
        })
        .collect();
    for pt in &scan.points {
        let mut j = if width > 0.0 {
            ((pt.t - scan.t_start) / width)
                .floor()
                .clamp(0.0, (n - 1) as f64) as usize
        } else {
            0
        };
        while j + 1 < n && pt.t >= frames[j + 1].t_start - snap {
            j += 1;
        }
        while j > 0 && pt.t < frames[j].t_start - snap {
            j -= 1;
        }
        frames[j].points.push(*pt);
    }
    Ok(frames)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub point_skip: usize,
    pub voxel_size: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            point_skip: 4,
            voxel_size: 0.5,
        }
    }
}

/// Keeps every `point_skip`-th point, then the first point seen in each voxel.
pub fn preprocess(points: &[TimedPoint], cfg: &PreprocessConfig) -> Vec<TimedPoint> {
    let skip = cfg.point_skip.max(1);
    let mut seen = HashSet::new();
    points
        .iter()
        .step_by(skip)
        .filter(|pt| {
            if cfg.voxel_size <= 0.0 {
                return true;
            }
            let key = (pt.p / cfg.voxel_size).map(|c| c.floor() as i64);
            seen.insert((key.x, key.y, key.z))
        })
        .copied()
        .collect()
}
