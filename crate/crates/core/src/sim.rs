//! Deterministic synthetic sequences: planar worlds, smooth trajectories,
//! a spinning multi-beam lidar and a noisy IMU.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{ExtrinsicCalib, ImuNoiseParams, ImuSample};
use crate::subframe::{Scan, TimedPoint};

/// A bounded rectangle lying in the plane `normal · x = normal · center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub center: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
}

impl Plane {
    /// `u_axis` is projected into the plane; `v = normal × u`.
    pub fn new(
        center: Vector3<f64>,
        normal: Vector3<f64>,
        u_axis: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    ) -> Self {
        let normal = normal.normalize();
        let u_axis = (u_axis - normal * normal.dot(&u_axis)).normalize();
        Self {
            normal,
            center,
            u_axis,
            half_u,
            half_v,
        }
    }

    pub fn v_axis(&self) -> Vector3<f64> {
        self.normal.cross(&self.u_axis)
    }

    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.center)
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset()
    }

    /// Ray parameter of the hit inside the rectangle, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = -self.signed_distance(origin) / denom;
        if s <= 0.0 {
            return None;
        }
        let rel = origin + dir * s - self.center;
        (rel.dot(&self.u_axis).abs() <= self.half_u && rel.dot(&self.v_axis()).abs() <= self.half_v)
            .then_some(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub name: String,
    pub planes: Vec<Plane>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Corridor,
    OpenPlane,
}

fn axis_box(min: Vector3<f64>, max: Vector3<f64>, with_caps: bool) -> Vec<Plane> {
    let c = (min + max) / 2.0;
    let h = (max - min) / 2.0;
    let mut out = vec![
        Plane::new(
            c - Vector3::x() * h.x,
            -Vector3::x(),
            Vector3::y(),
            h.y,
            h.z,
        ),
        Plane::new(c + Vector3::x() * h.x, Vector3::x(), Vector3::y(), h.y, h.z),
        Plane::new(
            c - Vector3::y() * h.y,
            -Vector3::y(),
            Vector3::x(),
            h.x,
            h.z,
        ),
        Plane::new(c + Vector3::y() * h.y, Vector3::y(), Vector3::x(), h.x, h.z),
    ];
    if with_caps {
        out.push(Plane::new(
            c - Vector3::z() * h.z,
            -Vector3::z(),
            Vector3::x(),
            h.x,
            h.y,
        ));
        out.push(Plane::new(
            c + Vector3::z() * h.z,
            Vector3::z(),
            Vector3::x(),
            h.x,
            h.y,
        ));
    }
    out
}

fn pillar(x: f64, y: f64, half: f64, floor: f64, ceiling: f64) -> Vec<Plane> {
    axis_box(
        Vector3::new(x - half, y - half, floor),
        Vector3::new(x + half, y + half, ceiling),
        false,
    )
}

impl WorldModel {
    /// Closed room with a few pillars; every pose direction is constrained.
    pub fn room() -> Self {
        let (floor, ceiling) = (-1.2, 3.0);
        let mut planes = axis_box(
            Vector3::new(-14.0, -9.0, floor),
            Vector3::new(10.0, 9.0, ceiling),
            true,
        );
        for (x, y, half) in [
            (-3.7, 0.0, 0.4),
            (5.0, 5.0, 0.6),
            (-10.0, -6.0, 0.5),
            (4.0, -5.0, 0.3),
            (-9.0, 6.0, 0.8),
        ] {
            planes.extend(pillar(x, y, half, floor, ceiling));
        }
        // A slanted panel breaks the axis alignment of the room.
        planes.push(Plane::new(
            Vector3::new(8.0, -7.0, 0.5),
            Vector3::new(-1.0, 1.0, 0.3),
            Vector3::z(),
            1.5,
            2.0,
        ));
        Self {
            name: "room".into(),
            planes,
        }
    }

    /// Long hallway with a floor and one end wall: along-axis translation is
    /// only observable while the end wall is within sensor range.
    pub fn corridor_hall() -> Self {
        let (floor, ceiling) = (-1.2, 2.5);
        let (x0, x1) = (-12.0, 110.0);
        let cx = (x0 + x1) / 2.0;
        let hx = (x1 - x0) / 2.0;
        let cz = (floor + ceiling) / 2.0;
        let hz = (ceiling - floor) / 2.0;
        let planes = vec![
            Plane::new(
                Vector3::new(cx, -2.0, cz),
                Vector3::y(),
                Vector3::x(),
                hx,
                hz,
            ),
            Plane::new(
                Vector3::new(cx, 2.0, cz),
                -Vector3::y(),
                Vector3::x(),
                hx,
                hz,
            ),
            Plane::new(
                Vector3::new(cx, 0.0, floor),
                Vector3::z(),
                Vector3::x(),
                hx,
                2.0,
            ),
            Plane::new(
                Vector3::new(x0, 0.0, cz),
                Vector3::x(),
                Vector3::y(),
                2.0,
                hz,
            ),
        ];
        Self {
            name: "corridor_hall".into(),
            planes,
        }
    }
}

/// Scenes that deliberately leave pose directions unconstrained.
pub fn degenerate_scene(kind: SceneKind) -> WorldModel {
    let big = 200.0;
    match kind {
        SceneKind::Corridor => WorldModel {
            name: "corridor".into(),
            planes: vec![
                Plane::new(
                    Vector3::new(0.0, -2.0, 0.0),
                    Vector3::y(),
                    Vector3::x(),
                    big,
                    big,
                ),
                Plane::new(
                    Vector3::new(0.0, 2.0, 0.0),
                    -Vector3::y(),
                    Vector3::x(),
                    big,
                    big,
                ),
            ],
        },
        SceneKind::OpenPlane => WorldModel {
            name: "open_plane".into(),
            planes: vec![Plane::new(
                Vector3::new(0.0, 0.0, -1.5),
                Vector3::z(),
                Vector3::x(),
                big,
                big,
            )],
        },
    }
}

/// `amplitude · sin(freq·τ + phase)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: Vector3<f64>,
    pub freq: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn new(amplitude: Vector3<f64>, freq: f64, phase: f64) -> Self {
        Self {
            amplitude,
            freq,
            phase,
        }
    }

    fn eval(&self, tau: f64) -> (Vector3<f64>, Vector3<f64>) {
        let arg = self.freq * tau + self.phase;
        (
            self.amplitude * arg.sin(),
            self.amplitude * (self.freq * arg.cos()),
        )
    }
}

/// One piece of a trajectory. Velocities vanish at both ends of every motion
/// segment so segments join continuously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Hold {
        duration: f64,
    },
    Motion {
        duration: f64,
        /// Length of the smoothstep ramps at both ends.
        ramp: f64,
        /// World-frame velocity terms.
        linear_const: Vector3<f64>,
        linear: Vec<Harmonic>,
        /// Body-frame angular rate terms.
        angular_const: Vector3<f64>,
        angular: Vec<Harmonic>,
    },
}

/// Smoothstep envelope and its derivative.
fn envelope(tau: f64, duration: f64, ramp: f64) -> (f64, f64) {
    let step = |x: f64| (x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x));
    if ramp <= 0.0 {
        return (1.0, 0.0);
    }
    if tau < ramp {
        let (e, d) = step((tau / ramp).clamp(0.0, 1.0));
        (e, d / ramp)
    } else if tau > duration - ramp {
        let (e, d) = step(((duration - tau) / ramp).clamp(0.0, 1.0));
        (e, -d / ramp)
    } else {
        (1.0, 0.0)
    }
}

/// Instantaneous motion: world velocity, world acceleration, body angular rate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kinematics {
    pub velocity: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match self {
            Segment::Hold { duration } | Segment::Motion { duration, .. } => *duration,
        }
    }

    fn kinematics(&self, tau: f64) -> Kinematics {
        match self {
            Segment::Hold { .. } => Kinematics::default(),
            Segment::Motion {
                duration,
                ramp,
                linear_const,
                linear,
                angular_const,
                angular,
            } => {
                let (e, de) = envelope(tau, *duration, *ramp);
                let (mut s, mut ds) = (*linear_const, Vector3::zeros());
                for h in linear {
                    let (v, d) = h.eval(tau);
                    s += v;
                    ds += d;
                }
                let mut w = *angular_const;
                for h in angular {
                    w += h.eval(tau).0;
                }
                Kinematics {
                    velocity: s * e,
                    accel: s * de + ds * e,
                    omega: w * e,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProfile {
    pub label: String,
    pub segments: Vec<Segment>,
}

impl TrajectoryProfile {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let mut start = 0.0;
        for seg in &self.segments {
            let d = seg.duration();
            if t < start + d {
                return seg.kinematics((t - start).max(0.0));
            }
            start += d;
        }
        Kinematics::default()
    }

    pub fn stationary(duration: f64) -> Self {
        Self {
            label: "stationary".into(),
            segments: vec![Segment::Hold { duration }],
        }
    }

    /// Two laps of a ~3.7 m radius loop at 0.8 m/s with mild attitude wobble, 60 s in total.
    pub fn gentle() -> Self {
        let period = 29.0;
        let w = std::f64::consts::TAU / period;
        let speed = 0.8;
        Self {
            label: "gentle".into(),
            segments: vec![
                Segment::Hold { duration: 1.0 },
                Segment::Motion {
                    duration: 58.0,
                    ramp: 2.0,
                    linear_const: Vector3::zeros(),
                    linear: vec![
                        Harmonic::new(Vector3::new(-speed, 0.0, 0.0), w, 0.0),
                        Harmonic::new(
                            Vector3::new(0.0, speed, 0.0),
                            w,
                            std::f64::consts::FRAC_PI_2,
                        ),
                        Harmonic::new(Vector3::new(0.0, 0.0, 0.1), 0.6, 0.0),
                    ],
                    angular_const: Vector3::new(0.0, 0.0, w),
                    angular: vec![
                        Harmonic::new(Vector3::new(0.08, 0.0, 0.0), 0.9, 0.0),
                        Harmonic::new(Vector3::new(0.0, 0.06, 0.1), 0.7, 1.0),
                    ],
                },
                Segment::Hold { duration: 1.0 },
            ],
        }
    }

    /// Violent hand-held style motion peaking near 20 rad/s about the vertical axis.
    pub fn aggressive() -> Self {
        Self {
            label: "aggressive".into(),
            segments: vec![
                Segment::Hold { duration: 1.5 },
                Segment::Motion {
                    duration: 20.0,
                    ramp: 1.0,
                    linear_const: Vector3::zeros(),
                    linear: vec![
                        Harmonic::new(Vector3::new(0.8, 0.0, 0.0), 0.7, 0.0),
                        Harmonic::new(Vector3::new(0.0, 0.6, 0.0), 0.9, 0.3),
                        Harmonic::new(Vector3::new(0.3, 0.3, 0.2), 5.0, 0.0),
                    ],
                    angular_const: Vector3::zeros(),
                    angular: vec![
                        Harmonic::new(Vector3::new(0.0, 0.0, 14.0), 1.3, 0.0),
                        Harmonic::new(Vector3::new(0.0, 0.0, 6.0), 7.1, 0.5),
                        Harmonic::new(Vector3::new(1.5, 0.0, 0.0), 6.3, 0.0),
                        Harmonic::new(Vector3::new(0.0, 1.5, 0.0), 8.2, 1.0),
                    ],
                },
                Segment::Hold { duration: 0.5 },
            ],
        }
    }

    /// Constant yaw rate after a short ramp.
    pub fn spin(rate: f64, duration: f64) -> Self {
        Self {
            label: "spin".into(),
            segments: vec![
                Segment::Hold { duration: 0.5 },
                Segment::Motion {
                    duration,
                    ramp: 0.5,
                    linear_const: Vector3::zeros(),
                    linear: Vec::new(),
                    angular_const: Vector3::new(0.0, 0.0, rate),
                    angular: Vec::new(),
                },
            ],
        }
    }

    /// Out along +x for about 25 m and back, with small lateral and attitude wiggles.
    pub fn corridor_shuttle() -> Self {
        let period = 50.0;
        let w = std::f64::consts::TAU / period;
        Self {
            label: "corridor_shuttle".into(),
            segments: vec![
                Segment::Hold { duration: 1.0 },
                Segment::Motion {
                    duration: period,
                    ramp: 1.0,
                    linear_const: Vector3::zeros(),
                    linear: vec![
                        Harmonic::new(Vector3::new(25.0 * w / 2.0, 0.0, 0.0), w, 0.0),
                        Harmonic::new(Vector3::new(0.0, 0.15, 0.05), 0.8, 0.0),
                    ],
                    angular_const: Vector3::zeros(),
                    angular: vec![Harmonic::new(Vector3::new(0.03, 0.03, 0.08), 0.5, 0.0)],
                },
                Segment::Hold { duration: 1.0 },
            ],
        }
    }
}

/// Ground-truth sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
}

/// Densely sampled true trajectory, starting at the origin with identity attitude.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub rate: f64,
    pub samples: Vec<GtSample>,
}

fn quat_rate(q: &Quaternion<f64>, w: &Vector3<f64>) -> Quaternion<f64> {
    q * Quaternion::from_parts(0.0, *w) * 0.5
}

impl GroundTruth {
    /// RK4 integration of the profile at `rate` Hz.
    pub fn integrate(profile: &TrajectoryProfile, rate: f64) -> Self {
        let h = 1.0 / rate;
        let n = (profile.duration() * rate).round() as usize;
        let mut samples = Vec::with_capacity(n + 1);
        let mut p = Vector3::zeros();
        let mut q = Quaternion::identity();
        for i in 0..=n {
            let t = i as f64 * h;
            let k = profile.kinematics(t);
            samples.push(GtSample {
                t,
                position: p,
                velocity: k.velocity,
                attitude: UnitQuaternion::new_normalize(q),
            });
            let mid = profile.kinematics(t + h / 2.0);
            let end = profile.kinematics(t + h);
            p += (k.velocity + mid.velocity * 4.0 + end.velocity) * (h / 6.0);
            let k1 = quat_rate(&q, &k.omega);
            let k2 = quat_rate(&(q + k1 * (h / 2.0)), &mid.omega);
            let k3 = quat_rate(&(q + k2 * (h / 2.0)), &mid.omega);
            let k4 = quat_rate(&(q + k3 * h), &end.omega);
            q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            q = q.normalize();
        }
        Self { rate, samples }
    }

    pub fn start(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Pose `(R, p)` at `t`: cubic Hermite in position, slerp in attitude.
    pub fn pose_at(&self, t: f64) -> (UnitQuaternion<f64>, Vector3<f64>) {
        let n = self.samples.len();
        let x = ((t - self.start()) * self.rate).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n.saturating_sub(2));
        let a = x - i as f64;
        let s0 = &self.samples[i];
        if n == 1 || a == 0.0 {
            return (s0.attitude, s0.position);
        }
        let s1 = &self.samples[i + 1];
        let h = 1.0 / self.rate;
        let (a2, a3) = (a * a, a * a * a);
        let p = s0.position * (2.0 * a3 - 3.0 * a2 + 1.0)
            + s0.velocity * ((a3 - 2.0 * a2 + a) * h)
            + s1.position * (-2.0 * a3 + 3.0 * a2)
            + s1.velocity * ((a3 - a2) * h);
        let q = s0
            .attitude
            .try_slerp(&s1.attitude, a, 1e-12)
            .unwrap_or(s0.attitude);
        (q, p)
    }

    /// Total path length.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub beams: usize,
    /// Full vertical fan, degrees, centred on the horizon.
    pub vertical_fov_deg: f64,
    pub azimuth_steps: usize,
    pub scan_rate: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub range_noise: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 16,
            vertical_fov_deg: 30.0,
            azimuth_steps: 900,
            scan_rate: 10.0,
            min_range: 0.5,
            max_range: 20.0,
            range_noise: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuSimConfig {
    pub rate: f64,
    pub noise: ImuNoiseParams,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl Default for ImuSimConfig {
    fn default() -> Self {
        Self {
            rate: 200.0,
            noise: ImuNoiseParams::default(),
            accel_bias: Vector3::new(0.02, -0.03, 0.04),
            gyro_bias: Vector3::new(0.002, -0.001, 0.0015),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub imu: ImuSimConfig,
    pub lidar: LidarConfig,
    pub extrinsic: ExtrinsicCalib,
}

impl SensorConfig {
    /// Same geometry with every noise source and bias removed.
    pub fn noise_free() -> Self {
        let mut s = Self::default();
        s.imu.noise = ImuNoiseParams {
            accel_noise_density: 0.0,
            gyro_noise_density: 0.0,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
        };
        s.imu.accel_bias = Vector3::zeros();
        s.imu.gyro_bias = Vector3::zeros();
        s.lidar.range_noise = 0.0;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.imu.noise.validate()?;
        let l = &self.lidar;
        let ok = self.imu.rate > 0.0
            && l.beams >= 1
            && l.azimuth_steps >= 1
            && l.scan_rate > 0.0
            && l.min_range >= 0.0
            && l.max_range > l.min_range
            && l.range_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "sensor rates and ranges must be positive".into(),
            ))
        }
    }
}

/// Generator output.
#[derive(Clone, Debug)]
pub struct SimSequence {
    pub imu: Vec<ImuSample>,
    pub scans: Vec<Scan>,
    pub ground_truth: GroundTruth,
    pub world: String,
    pub profile: String,
    pub seed: u64,
    pub sensors: SensorConfig,
}

/// Gravity used by the simulator, world frame.
pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -crate::GRAVITY)
}

const GT_RATE: f64 = 1000.0;

fn gaussian(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn simulate_imu(
    profile: &TrajectoryProfile,
    gt: &GroundTruth,
    cfg: &ImuSimConfig,
    seed: u64,
) -> Vec<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let dt = 1.0 / cfg.rate;
    let n = (profile.duration() * cfg.rate + 1e-9).floor() as usize;
    let (mut ba, mut bg) = (cfg.accel_bias, cfg.gyro_bias);
    let sa = cfg.noise.accel_noise_density / dt.sqrt();
    let sg = cfg.noise.gyro_noise_density / dt.sqrt();
    let wa = cfg.noise.accel_bias_walk * dt.sqrt();
    let wg = cfg.noise.gyro_bias_walk * dt.sqrt();
    (0..=n)
        .map(|i| {
            let t = i as f64 * dt;
            let k = profile.kinematics(t);
            let (q, _) = gt.pose_at(t);
            let force = q.inverse() * (k.accel - gravity());
            let sample = ImuSample::new(
                t,
                force + ba + gaussian(&mut rng) * sa,
                k.omega + bg + gaussian(&mut rng) * sg,
            );
            ba += gaussian(&mut rng) * wa;
            bg += gaussian(&mut rng) * wg;
            sample
        })
        .collect()
}

fn beam_directions(cfg: &LidarConfig) -> Vec<Vec<Vector3<f64>>> {
    let fov = cfg.vertical_fov_deg.to_radians();
    let elev: Vec<f64> = (0..cfg.beams)
        .map(|b| {
            if cfg.beams == 1 {
                0.0
            } else {
                -fov / 2.0 + fov * b as f64 / (cfg.beams - 1) as f64
            }
        })
        .collect();
    (0..cfg.azimuth_steps)
        .map(|j| {
            let az = std::f64::consts::TAU * j as f64 / cfg.azimuth_steps as f64;
            elev.iter()
                .map(|e| Vector3::new(e.cos() * az.cos(), e.cos() * az.sin(), e.sin()))
                .collect()
        })
        .collect()
}

fn simulate_scans(
    world: &WorldModel,
    gt: &GroundTruth,
    sensors: &SensorConfig,
    duration: f64,
    seed: u64,
) -> Vec<Scan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let cfg = &sensors.lidar;
    let period = 1.0 / cfg.scan_rate;
    let n_scans = (duration / period + 1e-9).floor() as usize;
    let dirs = beam_directions(cfg);
    let calib = &sensors.extrinsic;
    (0..n_scans)
        .map(|k| {
            let t_start = k as f64 * period;
            let mut points = Vec::with_capacity(cfg.azimuth_steps * cfg.beams);
            for (j, column) in dirs.iter().enumerate() {
                let t = t_start + period * j as f64 / cfg.azimuth_steps as f64;
                let (q, p) = gt.pose_at(t);
                let origin = q * calib.translation + p;
                let rot = q * calib.rotation;
                // Firing order rotates by one beam per column.
                for b in 0..column.len() {
                    let d = &column[(b + j) % column.len()];
                    let dw = rot * d;
                    let hit = world
                        .planes
                        .iter()
                        .filter_map(|pl| pl.intersect(&origin, &dw))
                        .fold(f64::INFINITY, f64::min);
                    if hit < cfg.min_range || hit > cfg.max_range {
                        continue;
                    }
                    let noise: f64 = rng.sample(StandardNormal);
                    points.push(TimedPoint::new(t, d * (hit + noise * cfg.range_noise)));
                }
            }
            Scan {
                t_start,
                t_end: t_start + period,
                points,
            }
        })
        .collect()
}

/// Generates a full synthetic sequence. Identical inputs give bit-identical output.
pub fn generate(
    world: &WorldModel,
    profile: &TrajectoryProfile,
    sensors: &SensorConfig,
    seed: u64,
) -> Result<SimSequence> {
    sensors.validate()?;
    if world.planes.is_empty() {
        return Err(Error::InvalidConfig("world has no planes".into()));
    }
    let duration = profile.duration();
    if !(duration > 0.0) {
        return Err(Error::InvalidConfig(
            "trajectory profile has zero duration".into(),
        ));
    }
    let gt = GroundTruth::integrate(profile, GT_RATE);
    let imu = simulate_imu(profile, &gt, &sensors.imu, seed);
    let scans = simulate_scans(world, &gt, sensors, duration, seed);
    Ok(SimSequence {
        imu,
        scans,
        ground_truth: gt,
        world: world.name.clone(),
        profile: profile.label.clone(),
        seed,
        sensors: *sensors,
    })
}

/// Looks up a built-in world by name.
pub fn world_by_name(name: &str) -> Result<WorldModel> {
    match name {
        "room" => Ok(WorldModel::room()),
        "corridor_hall" => Ok(WorldModel::corridor_hall()),
        "corridor" => Ok(degenerate_scene(SceneKind::Corridor)),
        "open_plane" => Ok(degenerate_scene(SceneKind::OpenPlane)),
        _ => Err(Error::InvalidConfig(format!("unknown world '{name}'"))),
    }
}

/// Looks up a built-in trajectory profile by name.
pub fn profile_by_name(name: &str) -> Result<TrajectoryProfile> {
    match name {
        "gentle" => Ok(TrajectoryProfile::gentle()),
        "aggressive" => Ok(TrajectoryProfile::aggressive()),
        "stationary" => Ok(TrajectoryProfile::stationary(10.0)),
        "spin" => Ok(TrajectoryProfile::spin(10.0, 5.0)),
        "corridor_shuttle" => Ok(TrajectoryProfile::corridor_shuttle()),
        _ => Err(Error::InvalidConfig(format!("unknown profile '{name}'"))),
    }
}
