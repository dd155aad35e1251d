//! Scan-by-scan odometry loop: sub-frame division, propagation and
//! undistortion, iterated update, windowed backward smoothing, integrity
//! gating and map maintenance.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_ate, evaluate_rte, StampedPose};
use crate::map::{RcVoxConfig, RcVoxMap};
use crate::propagation::{propagate_through, undistort, PoseSpline};
use crate::sim::SimSequence;
use crate::smoother::{
    backward_smooth, check_integrity, pose_block, IntegrityConfig, IntegrityVerdict, SmootherNode,
};
use crate::state::{block, Covariance, ExtrinsicCalib, ImuNoiseParams, ImuSample, NominalState};
use crate::subframe::{
    compute_motion_stats, imu_window, preprocess, split_scan, DividerConfig, PreprocessConfig,
    Scan, TimedPoint,
};
use crate::update::{iterated_update, IekfConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherSettings {
    pub enabled: bool,
    /// Number of most recent full scans whose sub-frames stay in the window.
    pub window_scans: usize,
    pub integrity: IntegrityConfig,
}

impl Default for SmootherSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            window_scans: 3,
            integrity: IntegrityConfig::default(),
        }
    }
}

/// Static initialization window and prior standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub static_duration: f64,
    pub position_std: f64,
    pub velocity_std: f64,
    pub attitude_std: f64,
    pub accel_bias_std: f64,
    pub gyro_bias_std: f64,
    pub gravity_std: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            static_duration: 0.5,
            position_std: 1e-3,
            velocity_std: 0.05,
            attitude_std: 0.01,
            accel_bias_std: 0.05,
            gyro_bias_std: 0.005,
            gravity_std: 0.05,
        }
    }
}

impl InitConfig {
    fn prior_covariance(&self) -> Covariance {
        let mut p = Covariance::zeros();
        for (start, std) in [
            (block::POS, self.position_std),
            (block::VEL, self.velocity_std),
            (block::ROT, self.attitude_std),
            (block::BIAS_ACC, self.accel_bias_std),
            (block::BIAS_GYR, self.gyro_bias_std),
            (block::GRAVITY, self.gravity_std),
        ] {
            for i in 0..3 {
                p[(start + i, start + i)] = std * std;
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub divider: DividerConfig,
    pub imu_noise: ImuNoiseParams,
    pub extrinsic: ExtrinsicCalib,
    pub map: RcVoxConfig,
    pub iekf: IekfConfig,
    pub smoother: SmootherSettings,
    pub preprocess: PreprocessConfig,
    pub init: InitConfig,
    /// Consecutive sub-frames without a single match before tracking is declared lost.
    pub max_zero_match_subframes: usize,
    /// Overrides the motion-adaptive sub-frame count when set.
    pub force_subframes: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            divider: DividerConfig::default(),
            imu_noise: ImuNoiseParams::default(),
            extrinsic: ExtrinsicCalib::default(),
            map: RcVoxConfig::default(),
            iekf: IekfConfig::default(),
            smoother: SmootherSettings::default(),
            preprocess: PreprocessConfig::default(),
            init: InitConfig::default(),
            max_zero_match_subframes: 20,
            force_subframes: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.divider.validate()?;
        self.imu_noise.validate()?;
        self.map.validate()?;
        self.iekf.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.smoother.window_scans == 0 {
            return bad("smoother.window_scans must be at least 1");
        }
        if !self.smoother.integrity.threshold.is_finite() {
            return bad("smoother.integrity.threshold must be finite");
        }
        if self.force_subframes == Some(0) {
            return bad("force_subframes must be at least 1");
        }
        if self.max_zero_match_subframes == 0 {
            return bad("max_zero_match_subframes must be at least 1");
        }
        if self.preprocess.point_skip == 0 || !(self.preprocess.voxel_size >= 0.0) {
            return bad("preprocess needs point_skip >= 1 and voxel_size >= 0");
        }
        let i = &self.init;
        let stds = [
            i.position_std,
            i.velocity_std,
            i.attitude_std,
            i.accel_bias_std,
            i.gyro_bias_std,
            i.gravity_std,
        ];
        if !(i.static_duration > 0.0) || stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("init needs a positive static_duration and positive prior stds");
        }
        if !self.extrinsic.translation.iter().all(|v| v.is_finite()) {
            return bad("extrinsic translation must be finite");
        }
        Ok(())
    }
}

/// Sensor streams consumed by [`run`].
#[derive(Clone, Debug, Default)]
pub struct Sequence {
    pub imu: Vec<ImuSample>,
    pub scans: Vec<Scan>,
    pub ground_truth: Option<Vec<StampedPose>>,
}

impl From<&SimSequence> for Sequence {
    fn from(sim: &SimSequence) -> Self {
        Self {
            imu: sim.imu.clone(),
            scans: sim.scans.clone(),
            ground_truth: Some(
                sim.ground_truth
                    .samples
                    .iter()
                    .map(|s| StampedPose::new(s.t, s.position, s.attitude))
                    .collect(),
            ),
        }
    }
}

impl Sequence {
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .imu
            .windows(2)
            .position(|w| !(w[1].timestamp > w[0].timestamp))
        {
            return Err(Error::Unsorted { index: i + 1 });
        }
        if let Some(i) = self
            .scans
            .windows(2)
            .position(|w| w[1].t_start < w[0].t_end - 1e-9)
        {
            return Err(Error::Unsorted { index: i + 1 });
        }
        if self.scans.iter().any(|s| !(s.t_end > s.t_start)) {
            return Err(Error::InvalidConfig(
                "every scan needs t_end > t_start".into(),
            ));
        }
        Ok(())
    }
}

/// Mean wall-clock milliseconds per processed scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub subframe: f64,
    pub propagation_update: f64,
    pub smooth_integrity: f64,
    pub mapping: f64,
    pub total: f64,
}

impl StageTiming {
    pub fn stage_sum(&self) -> f64 {
        self.subframe + self.propagation_update + self.smooth_integrity + self.mapping
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub points: usize,
    pub occupied_grids: usize,
    pub memory_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_rmse: Option<f64>,
    pub rte_per_10m: Option<f64>,
    pub timing_ms: StageTiming,
    pub scans: usize,
    pub subframes: usize,
    /// Scans per chosen sub-frame count.
    pub subframe_histogram: BTreeMap<usize, usize>,
    pub insufficient_subframes: usize,
    pub zero_match_subframes: usize,
    pub map: MapStats,
    pub aborted: Option<String>,
    pub seed: u64,
}

/// Per sub-frame diagnostics, in finalization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub t: f64,
    pub scan: usize,
    pub subframes_in_scan: usize,
    pub matches: usize,
    pub iterations: usize,
    pub converged: bool,
    /// `None` only for the scan that seeded the map.
    pub verdict: Option<IntegrityVerdict>,
    pub inserted: bool,
    /// Pose block of the final covariance, position then attitude.
    pub pose_covariance: Matrix6<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub time: f64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Vec<StampedPose>,
    pub metrics: MetricsReport,
    pub nodes: Vec<NodeRecord>,
    pub aborted: Option<Abort>,
}

struct WindowNode {
    node: SmootherNode,
    scan: usize,
    subframes_in_scan: usize,
    points: Vec<Vector3<f64>>,
    smoothed: NominalState,
    smoothed_cov: Covariance,
    verdict: Option<IntegrityVerdict>,
    inserted: bool,
    matches: usize,
    iterations: usize,
    converged: bool,
    /// The scan that seeded the map; it has no verdict.
    seed: bool,
}

impl WindowNode {
    fn finalize(self) -> (StampedPose, NodeRecord) {
        let pose = StampedPose::new(
            self.node.timestamp,
            self.smoothed.position,
            self.smoothed.attitude,
        );
        let record = NodeRecord {
            t: self.node.timestamp,
            scan: self.scan,
            subframes_in_scan: self.subframes_in_scan,
            matches: self.matches,
            iterations: self.iterations,
            converged: self.converged,
            verdict: self.verdict,
            inserted: self.inserted,
            pose_covariance: pose_block(&self.smoothed_cov),
        };
        (pose, record)
    }

    fn world_points(&self, calib: &ExtrinsicCalib) -> Vec<Vector3<f64>> {
        let r = self.smoothed.rotation();
        self.points
            .iter()
            .map(|p| r * calib.lidar_to_body(p) + self.smoothed.position)
            .collect()
    }
}

#[derive(Default)]
struct Timers {
    subframe: Duration,
    propagation_update: Duration,
    smooth_integrity: Duration,
    mapping: Duration,
    total: Duration,
}

/// Gravity, gyro bias and prior covariance from the leading static interval.
pub fn initialize(imu: &[ImuSample], cfg: &InitConfig) -> Result<(NominalState, Covariance, f64)> {
    let t0 = imu.first().map(|s| s.timestamp).unwrap_or(0.0);
    let t_init = t0 + cfg.static_duration;
    let window: Vec<_> = imu.iter().take_while(|s| s.timestamp <= t_init).collect();
    if window.len() < 2 {
        return Err(Error::InsufficientSamples {
            what: "static initialization",
            needed: 2,
            got: window.len(),
        });
    }
    let n = window.len() as f64;
    let acc = window.iter().map(|s| s.accel).sum::<Vector3<f64>>() / n;
    let gyr = window.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n;
    if !(acc.norm() > 1e-6) {
        return Err(Error::Singular("static accelerometer mean"));
    }
    let x = NominalState {
        gyro_bias: gyr,
        gravity: -acc.normalize() * crate::GRAVITY,
        ..NominalState::default()
    };
    Ok((x, cfg.prior_covariance(), t_init))
}

/// Points inside the propagated span, undistorted to `t_to` in the lidar frame.
fn undistorted(
    points: &[TimedPoint],
    spline: &PoseSpline,
    t_to: f64,
    calib: &ExtrinsicCalib,
) -> Result<Vec<Vector3<f64>>> {
    let (lo, hi) = spline.span().unwrap_or((t_to, t_to));
    let inside: Vec<_> = points
        .iter()
        .filter(|p| p.t >= lo && p.t <= hi)
        .copied()
        .collect();
    Ok(undistort(&inside, spline, t_to, calib)?
        .into_iter()
        .map(|p| p.p)
        .collect())
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    imu: &'a [ImuSample],
    map: RcVoxMap,
    x: NominalState,
    p: Covariance,
    t_prev: f64,
    window: Vec<WindowNode>,
    trajectory: Vec<StampedPose>,
    records: Vec<NodeRecord>,
    timers: Timers,
    histogram: BTreeMap<usize, usize>,
    scans: usize,
    zero_streak: usize,
    zero_total: usize,
}

impl Runner<'_> {
    fn process_scan(&mut self, scan_idx: usize, scan: &Scan) -> Result<Option<Abort>> {
        let start = Instant::now();
        let cfg = self.cfg;

        let clock = Instant::now();
        let mut points = preprocess(&scan.points, &cfg.preprocess);
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        let n = match cfg.force_subframes {
            Some(n) => n,
            None => {
                let stats = compute_motion_stats(imu_window(self.imu, scan.t_start, scan.t_end))?;
                crate::subframe::subframe_count(&stats, &cfg.divider)
            }
        };
        let reduced = Scan {
            t_start: scan.t_start,
            t_end: scan.t_end,
            points,
        };
        let frames = split_scan(&reduced, n, self.imu)?;
        *self.histogram.entry(n).or_default() += 1;
        self.timers.subframe += clock.elapsed();

        let clock = Instant::now();
        let mut abort = None;
        for frame in &frames {
            let t_to = frame.t_end;
            if t_to <= self.t_prev {
                continue;
            }
            let prop = propagate_through(
                &self.x,
                &self.p,
                self.imu,
                self.t_prev,
                t_to,
                &cfg.imu_noise,
            )?;
            let pts = undistorted(&frame.points, &prop.spline, t_to, &cfg.extrinsic)?;
            let upd = match iterated_update(
                &prop.state,
                &prop.covariance,
                &pts,
                &self.map,
                &cfg.extrinsic,
                &cfg.iekf,
            ) {
                Ok(u) => u,
                Err(e @ (Error::Singular(_) | Error::NonFinite(_))) => {
                    abort = Some(Abort {
                        time: t_to,
                        reason: format!("filter diverged: {e}"),
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
            if let Some(last) = self.window.last_mut() {
                last.node.transitions.extend(prop.transitions);
            }
            if upd.match_count == 0 {
                self.zero_streak += 1;
                self.zero_total += 1;
            } else {
                self.zero_streak = 0;
            }
            self.x = upd.state;
            self.p = upd.covariance;
            self.t_prev = t_to;
            self.window.push(WindowNode {
                node: SmootherNode {
                    timestamp: t_to,
                    filtered_state: self.x.clone(),
                    filtered_cov: self.p,
                    transitions: Vec::new(),
                },
                scan: scan_idx,
                subframes_in_scan: n,
                points: pts,
                smoothed: self.x.clone(),
                smoothed_cov: self.p,
                verdict: None,
                inserted: false,
                matches: upd.match_count,
                iterations: upd.iterations,
                converged: upd.converged,
                seed: false,
            });
            if self.zero_streak >= cfg.max_zero_match_subframes {
                abort = Some(Abort {
                    time: t_to,
                    reason: Error::TrackingFailure {
                        time: t_to,
                        consecutive: self.zero_streak,
                    }
                    .to_string(),
                });
                break;
            }
        }
        self.timers.propagation_update += clock.elapsed();
        if abort.is_some() {
            self.timers.total += start.elapsed();
            return Ok(abort);
        }

        let clock = Instant::now();
        let oldest_kept = (scan_idx + 1).saturating_sub(cfg.smoother.window_scans);
        let expired = self
            .window
            .iter()
            .take_while(|w| w.scan < oldest_kept)
            .count();
        for w in self.window.drain(..expired) {
            let (pose, rec) = w.finalize();
            self.trajectory.push(pose);
            self.records.push(rec);
        }
        if cfg.smoother.enabled && self.window.len() > 1 {
            let nodes: Vec<_> = self.window.iter().map(|w| w.node.clone()).collect();
            for (w, s) in self.window.iter_mut().zip(backward_smooth(&nodes)?) {
                w.smoothed = s.state;
                w.smoothed_cov = s.covariance;
            }
        }
        for w in self.window.iter_mut().filter(|w| !w.seed) {
            w.verdict = Some(check_integrity(&w.smoothed_cov, &cfg.smoother.integrity));
        }
        self.timers.smooth_integrity += clock.elapsed();

        let clock = Instant::now();
        self.map.update_origin(self.x.position);
        for i in 0..self.window.len() {
            let w = &self.window[i];
            if w.inserted || !w.verdict.is_some_and(|v| v.sufficient) {
                continue;
            }
            let world = w.world_points(&cfg.extrinsic);
            self.map.insert(&world);
            self.window[i].inserted = true;
        }
        self.timers.mapping += clock.elapsed();

        self.scans += 1;
        self.timers.total += start.elapsed();
        Ok(None)
    }

    fn finish(mut self, seq: &Sequence, abort: Option<Abort>) -> RunOutput {
        // An abort skips the integrity pass of its last scan.
        for w in self
            .window
            .iter_mut()
            .filter(|w| !w.seed && w.verdict.is_none())
        {
            w.verdict = Some(check_integrity(
                &w.smoothed_cov,
                &self.cfg.smoother.integrity,
            ));
        }
        for w in self.window.drain(..) {
            let (pose, rec) = w.finalize();
            self.trajectory.push(pose);
            self.records.push(rec);
        }
        let (ate_rmse, rte_per_10m) = match &seq.ground_truth {
            Some(gt) => (
                evaluate_ate(&self.trajectory, gt).ok().map(|r| r.rmse),
                evaluate_rte(&self.trajectory, gt, 10.0)
                    .ok()
                    .map(|r| r.rmse),
            ),
            None => (None, None),
        };
        let per_scan = |d: Duration| {
            if self.scans == 0 {
                0.0
            } else {
                d.as_secs_f64() * 1e3 / self.scans as f64
            }
        };
        let metrics = MetricsReport {
            ate_rmse,
            rte_per_10m,
            timing_ms: StageTiming {
                subframe: per_scan(self.timers.subframe),
                propagation_update: per_scan(self.timers.propagation_update),
                smooth_integrity: per_scan(self.timers.smooth_integrity),
                mapping: per_scan(self.timers.mapping),
                total: per_scan(self.timers.total),
            },
            scans: self.scans,
            subframes: self.records.len(),
            subframe_histogram: self.histogram,
            insufficient_subframes: self
                .records
                .iter()
                .filter(|r| r.verdict.is_some_and(|v| !v.sufficient))
                .count(),
            zero_match_subframes: self.zero_total,
            map: MapStats {
                points: self.map.point_count(),
                occupied_grids: self.map.occupied_grids(),
                memory_bytes: self.map.memory_bytes(),
            },
            aborted: abort.as_ref().map(|a| a.reason.clone()),
            seed: self.cfg.seed,
        };
        RunOutput {
            trajectory: self.trajectory,
            metrics,
            nodes: self.records,
            aborted: abort,
        }
    }
}

/// Runs the full odometry loop over `seq`.
///
/// Lost tracking is not an error: the output carries the partial trajectory
/// and an [`Abort`] record.
pub fn run(cfg: &PipelineConfig, seq: &Sequence) -> Result<RunOutput> {
    cfg.validate()?;
    seq.validate()?;
    let (x, p, t_init) = initialize(&seq.imu, &cfg.init)?;
    let Some(first) = seq.scans.iter().position(|s| s.t_start >= t_init - 1e-9) else {
        return Err(Error::InsufficientSamples {
            what: "scans after initialization",
            needed: 1,
            got: 0,
        });
    };

    // The first full scan after initialization seeds the map from the propagated pose.
    let seed_scan = &seq.scans[first];
    let prop = propagate_through(&x, &p, &seq.imu, t_init, seed_scan.t_end, &cfg.imu_noise)?;
    let (x, p) = (prop.state, prop.covariance);
    let mut pts = preprocess(&seed_scan.points, &cfg.preprocess);
    pts.sort_by(|a, b| a.t.total_cmp(&b.t));
    let seed_node = WindowNode {
        node: SmootherNode {
            timestamp: seed_scan.t_end,
            filtered_state: x.clone(),
            filtered_cov: p,
            transitions: Vec::new(),
        },
        scan: first,
        subframes_in_scan: 1,
        points: undistorted(&pts, &prop.spline, seed_scan.t_end, &cfg.extrinsic)?,
        smoothed: x.clone(),
        smoothed_cov: p,
        verdict: None,
        inserted: true,
        matches: 0,
        iterations: 0,
        converged: false,
        seed: true,
    };
    let mut map = RcVoxMap::initialize(cfg.map, x.position)?;
    let stats = map.insert(&seed_node.world_points(&cfg.extrinsic));
    debug!("map seeded with {} points", stats.inserted);
    let mut runner = Runner {
        cfg,
        imu: &seq.imu,
        map,
        x,
        p,
        t_prev: seed_scan.t_end,
        window: vec![seed_node],
        trajectory: Vec::new(),
        records: Vec::new(),
        timers: Timers::default(),
        histogram: BTreeMap::new(),
        scans: 0,
        zero_streak: 0,
        zero_total: 0,
    };

    let mut abort = None;
    for (k, scan) in seq.scans.iter().enumerate().skip(first + 1) {
        if let Some(a) = runner.process_scan(k, scan)? {
            warn!("aborting at t = {:.3}: {}", a.time, a.reason);
            abort = Some(a);
            break;
        }
    }
    let out = runner.finish(seq, abort);
    info!(
        "processed {} scans, {} sub-frames, ate {:?}",
        out.metrics.scans, out.metrics.subframes, out.metrics.ate_rmse
    );
    Ok(out)
}
