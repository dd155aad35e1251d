//! IMU forward propagation of the nominal state and of the error-state
//! covariance, plus motion compensation of timestamped lidar points.

use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::state::{
    block, skew, so3_exp, so3_right_jacobian, symmetrize, Covariance, ExtrinsicCalib,
    ImuNoiseParams, ImuSample, NominalState, NOISE_DIM, STATE_DIM,
};
use crate::subframe::TimedPoint;

pub type NoiseJacobian = SMatrix<f64, STATE_DIM, NOISE_DIM>;
pub type NoiseCovariance = SMatrix<f64, NOISE_DIM, NOISE_DIM>;

/// Linearized error-state transfer for one propagation step.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    /// `I + F Δt`, the Jacobian of the discrete propagation w.r.t. the error state.
    pub phi: Covariance,
    /// `C`; the noise enters as `(C Δt) w`.
    pub noise_jacobian: NoiseJacobian,
    /// Covariance of the discrete noise sample `w`.
    pub noise_cov: NoiseCovariance,
    pub dt: f64,
    pub input: ImuSample,
}

impl TransitionRecord {
    /// `(C Δt) Q (C Δt)ᵀ`
    pub fn process_noise(&self) -> Covariance {
        let g = self.noise_jacobian * self.dt;
        g * self.noise_cov * g.transpose()
    }
}

fn check_step(u: &ImuSample, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "propagation step must be positive, got {dt}"
        )));
    }
    if !u.accel.iter().chain(u.gyro.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("IMU sample"));
    }
    Ok(())
}

/// One discrete propagation step of the nominal state.
pub fn propagate_nominal(x: &NominalState, u: &ImuSample, dt: f64) -> Result<NominalState> {
    check_step(u, dt)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("nominal state"));
    }
    Ok(step_nominal(x, u, dt))
}

pub(crate) fn step_nominal(x: &NominalState, u: &ImuSample, dt: f64) -> NominalState {
    let phi = (u.gyro - x.gyro_bias) * dt;
    // Specific force is rotated with the attitude at the middle of the step.
    let acc = x.attitude * (so3_exp(&(phi * 0.5)) * (u.accel - x.accel_bias)) + x.gravity;
    let attitude = x.attitude * so3_exp(&phi);
    NominalState {
        position: x.position + x.velocity * dt + 0.5 * acc * dt * dt,
        velocity: x.velocity + acc * dt,
        attitude: UnitQuaternion::new_normalize(attitude.into_inner()),
        accel_bias: x.accel_bias,
        gyro_bias: x.gyro_bias,
        gravity: x.gravity,
    }
}

/// Error-state transition, noise Jacobian and discrete noise covariance for
/// one step of [`propagate_nominal`] evaluated at `x`.
pub fn build_transition(
    x: &NominalState,
    u: &ImuSample,
    dt: f64,
    noise: &ImuNoiseParams,
) -> Result<TransitionRecord> {
    check_step(u, dt)?;
    let r = x.rotation();
    let acc = u.accel - x.accel_bias;
    let phi_rot = (u.gyro - x.gyro_bias) * dt;
    let half = phi_rot * 0.5;
    let m = so3_exp(&half).to_rotation_matrix().into_inner();
    let rm = r * m;
    let jr = so3_right_jacobian(&phi_rot);
    let acc_rot = -r * skew(&(m * acc));
    // Sensitivity of the rotated specific force to the gyro input.
    let acc_gyr = rm * skew(&acc) * so3_right_jacobian(&half) * (0.5 * dt);
    let i3 = Matrix3::identity();
    let dt2 = 0.5 * dt * dt;

    let mut phi = Covariance::identity();
    let mut set = |row: usize, col: usize, m: Matrix3<f64>| {
        phi.fixed_view_mut::<3, 3>(row, col).copy_from(&m);
    };
    use block::*;
    set(POS, VEL, i3 * dt);
    set(POS, ROT, acc_rot * dt2);
    set(POS, BIAS_ACC, -rm * dt2);
    set(POS, BIAS_GYR, acc_gyr * dt2);
    set(POS, GRAVITY, i3 * dt2);
    set(VEL, ROT, acc_rot * dt);
    set(VEL, BIAS_ACC, -rm * dt);
    set(VEL, BIAS_GYR, acc_gyr * dt);
    set(VEL, GRAVITY, i3 * dt);
    set(
        ROT,
        ROT,
        so3_exp(&phi_rot)
            .to_rotation_matrix()
            .into_inner()
            .transpose(),
    );
    set(ROT, BIAS_GYR, -jr * dt);

    let mut c = NoiseJacobian::zeros();
    c.fixed_view_mut::<3, 3>(POS, noise::ACC)
        .copy_from(&(-0.5 * rm * dt));
    c.fixed_view_mut::<3, 3>(POS, noise::GYR)
        .copy_from(&(0.5 * acc_gyr * dt));
    c.fixed_view_mut::<3, 3>(VEL, noise::ACC).copy_from(&(-rm));
    c.fixed_view_mut::<3, 3>(VEL, noise::GYR)
        .copy_from(&acc_gyr);
    c.fixed_view_mut::<3, 3>(ROT, noise::GYR).copy_from(&(-jr));
    c.fixed_view_mut::<3, 3>(BIAS_ACC, noise::BIAS_ACC)
        .copy_from(&i3);
    c.fixed_view_mut::<3, 3>(BIAS_GYR, noise::BIAS_GYR)
        .copy_from(&i3);

    // Discrete samples of a white noise with density σ have variance σ²/Δt,
    // so the injected covariance (CΔt)Q(CΔt)ᵀ grows linearly with Δt.
    let mut q = NoiseCovariance::zeros();
    let densities = [
        (noise::ACC, noise.accel_noise_density),
        (noise::GYR, noise.gyro_noise_density),
        (noise::BIAS_ACC, noise.accel_bias_walk),
        (noise::BIAS_GYR, noise.gyro_bias_walk),
    ];
    for (offset, sigma) in densities {
        for k in 0..3 {
            q[(offset + k, offset + k)] = sigma * sigma / dt;
        }
    }

    Ok(TransitionRecord {
        phi,
        noise_jacobian: c,
        noise_cov: q,
        dt,
        input: *u,
    })
}

/// `P' = (I+FΔt) P (I+FΔt)ᵀ + (CΔt) Q (CΔt)ᵀ`, symmetrized.
pub fn propagate_covariance(p: &Covariance, tr: &TransitionRecord) -> Covariance {
    let mut out = tr.phi * p * tr.phi.transpose() + tr.process_noise();
    symmetrize(&mut out);
    out
}

/// Piecewise pose trajectory over one sub-frame: linear in translation,
/// spherical-linear in rotation between knots.
#[derive(Clone, Debug, Default)]
pub struct PoseSpline {
    knots: Vec<(f64, Vector3<f64>, UnitQuaternion<f64>)>,
}

/// Tolerance when checking a timestamp against the spline span.
const SPAN_EPS: f64 = 1e-9;

impl PoseSpline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_states<'a>(
        knots: impl IntoIterator<Item = (f64, &'a NominalState)>,
    ) -> Result<Self> {
        let mut s = Self::new();
        for (t, x) in knots {
            s.push(t, x.position, x.attitude)?;
        }
        Ok(s)
    }

    pub fn push(
        &mut self,
        t: f64,
        position: Vector3<f64>,
        attitude: UnitQuaternion<f64>,
    ) -> Result<()> {
        if let Some((last, ..)) = self.knots.last() {
            if t <= *last {
                return Err(Error::Unsorted {
                    index: self.knots.len(),
                });
            }
        }
        self.knots.push((t, position, attitude));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.knots.first()?.0, self.knots.last()?.0))
    }

    /// Body pose `(R, p)` at time `t`.
    pub fn pose_at(&self, t: f64) -> Result<(UnitQuaternion<f64>, Vector3<f64>)> {
        let (start, end) = self.span().ok_or(Error::OutOfSpan {
            t,
            start: f64::NAN,
            end: f64::NAN,
        })?;
        if t < start - SPAN_EPS || t > end + SPAN_EPS {
            return Err(Error::OutOfSpan { t, start, end });
        }
        if self.knots.len() == 1 {
            let (_, p, q) = self.knots[0];
            return Ok((q, p));
        }
        let hi = self
            .knots
            .partition_point(|k| k.0 < t)
            .clamp(1, self.knots.len() - 1);
        let (t0, p0, q0) = &self.knots[hi - 1];
        let (t1, p1, q1) = &self.knots[hi];
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let q = q0.try_slerp(q1, a, 1e-12).unwrap_or(*q0);
        Ok((q, p0.lerp(p1, a)))
    }
}

/// Re-expresses every point in the lidar frame at `target_time`, using the
/// spline pose at each point's own timestamp.
pub fn undistort(
    points: &[TimedPoint],
    spline: &PoseSpline,
    target_time: f64,
    calib: &ExtrinsicCalib,
) -> Result<Vec<TimedPoint>> {
    let (q_end, p_end) = spline.pose_at(target_time)?;
    let q_end_inv = q_end.inverse();
    points
        .iter()
        .map(|pt| {
            let (q, p) = spline.pose_at(pt.t)?;
            let world = q * calib.lidar_to_body(&pt.p) + p;
            let body = q_end_inv * (world - p_end);
            Ok(TimedPoint {
                t: pt.t,
                p: calib.body_to_lidar(&body),
                intensity: pt.intensity,
            })
        })
        .collect()
}

/// Output of [`propagate_through`].
#[derive(Clone, Debug)]
pub struct Propagated {
    pub state: NominalState,
    pub covariance: Covariance,
    pub transitions: Vec<TransitionRecord>,
    pub spline: PoseSpline,
}

/// Propagates `(x, P)` from `t_from` to `t_to` through an IMU stream.
///
/// Step boundaries are `t_from`, every sample strictly inside the interval and
/// `t_to`. Each step uses the measurement linearly interpolated at the step
/// midpoint, which reduces to the mean of two consecutive samples away from
/// the interval ends.
pub fn propagate_through(
    x: &NominalState,
    p: &Covariance,
    imu: &[ImuSample],
    t_from: f64,
    t_to: f64,
    noise: &ImuNoiseParams,
) -> Result<Propagated> {
    if imu.is_empty() {
        return Err(Error::InsufficientSamples {
            what: "propagation",
            needed: 1,
            got: 0,
        });
    }
    let mut spline = PoseSpline::new();
    spline.push(t_from, x.position, x.attitude)?;
    let mut state = x.clone();
    let mut cov = *p;
    let mut transitions = Vec::new();
    if t_to <= t_from {
        return Ok(Propagated {
            state,
            covariance: cov,
            transitions,
            spline,
        });
    }

    let first_inside = imu.partition_point(|s| s.timestamp <= t_from);
    let mut breaks = vec![t_from];
    breaks.extend(
        imu[first_inside..]
            .iter()
            .map(|s| s.timestamp)
            .take_while(|&t| t < t_to),
    );
    breaks.push(t_to);

    for w in breaks.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let dt = tb - ta;
        if dt <= 0.0 {
            continue;
        }
        let mut u = sample_at(imu, 0.5 * (ta + tb));
        u.timestamp = ta;
        let tr = build_transition(&state, &u, dt, noise)?;
        state = propagate_nominal(&state, &u, dt)?;
        cov = propagate_covariance(&cov, &tr);
        transitions.push(tr);
        spline.push(tb, state.position, state.attitude)?;
    }

    Ok(Propagated {
        state,
        covariance: cov,
        transitions,
        spline,
    })
}

/// IMU measurement linearly interpolated at `t`, held constant outside the stream.
pub fn sample_at(imu: &[ImuSample], t: f64) -> ImuSample {
    let hi = imu.partition_point(|s| s.timestamp < t);
    let mut out = if hi == 0 {
        imu[0]
    } else if hi == imu.len() {
        imu[imu.len() - 1]
    } else {
        imu[hi - 1].lerp(&imu[hi], t)
    };
    out.timestamp = t;
    out
}
