//! Manifold state, tangent-space error state and SO(3) helpers.
//!
//! Conventions used by every module in the crate:
//!
//! - Quaternions are Hamilton, scalar-first in meaning (nalgebra stores them
//!   `[i, j, k, w]`), and rotate body-frame vectors into the global frame.
//! - Attitude errors are right (local) perturbations: `q ⊗ Exp(δθ)`.
//! - The error state is ordered `(δp, δv, δθ, δb_a, δb_g, δg)`; the canonical
//!   index table is [`block`].

use nalgebra::{Matrix3, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of the error state.
pub const STATE_DIM: usize = 18;
/// Dimension of the process noise vector `(n_a, n_ω, n_ba, n_bω)`.
pub const NOISE_DIM: usize = 12;

pub type ErrorState = SVector<f64, STATE_DIM>;
pub type Covariance = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Canonical offsets of each 3-vector block inside [`ErrorState`].
pub mod block {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const ROT: usize = 6;
    pub const BIAS_ACC: usize = 9;
    pub const BIAS_GYR: usize = 12;
    pub const GRAVITY: usize = 15;

    /// Every block in state order, with a short name.
    pub const ALL: [(&str, usize); 6] = [
        ("position", POS),
        ("velocity", VEL),
        ("attitude", ROT),
        ("accel_bias", BIAS_ACC),
        ("gyro_bias", BIAS_GYR),
        ("gravity", GRAVITY),
    ];

    /// Offsets of the process noise blocks.
    pub mod noise {
        pub const ACC: usize = 0;
        pub const GYR: usize = 3;
        pub const BIAS_ACC: usize = 6;
        pub const BIAS_GYR: usize = 9;
    }

    const _: () = {
        let mut i = 0;
        while i < ALL.len() {
            assert!(ALL[i].1 == 3 * i);
            i += 1;
        }
        assert!(GRAVITY + 3 == super::STATE_DIM);
    };
}

/// Smallest rotation angle handled by the closed-form branches of the SO(3) maps.
const SMALL_ANGLE: f64 = 1e-6;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// SO(3) exponential map from a rotation vector to a unit quaternion.
pub fn so3_exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (w, k) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, k * phi.x, k * phi.y, k * phi.z))
}

/// SO(3) logarithm, returning the rotation vector with angle in `[0, π]`.
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    // q and -q are the same rotation; pick the short way round.
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let n = v.norm();
    if n < SMALL_ANGLE {
        // 2 atan(n / w) / n expanded around n = 0
        let scale = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
        v * scale
    } else {
        v * (2.0 * n.atan2(w) / n)
    }
}

/// Right Jacobian of SO(3).
pub fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2.sqrt() < SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * k + (k * k) / 6.0;
    }
    let theta = theta2.sqrt();
    Matrix3::identity() - (1.0 - theta.cos()) / theta2 * k
        + (theta - theta.sin()) / (theta2 * theta) * (k * k)
}

/// Full nominal state of the IMU body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub gravity: Vector3<f64>,
}

impl Default for NominalState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            gravity: Vector3::new(0.0, 0.0, -crate::GRAVITY),
        }
    }
}

impl NominalState {
    pub fn rotation(&self) -> Matrix3<f64> {
        self.attitude.to_rotation_matrix().into_inner()
    }

    pub fn is_finite(&self) -> bool {
        let q = self.attitude.quaternion();
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && q.coords.iter().all(|v| v.is_finite())
            && self.accel_bias.iter().all(|v| v.is_finite())
            && self.gyro_bias.iter().all(|v| v.is_finite())
            && self.gravity.iter().all(|v| v.is_finite())
    }

    /// Manifold retraction `x ⊞ δx`.
    pub fn boxplus(&self, dx: &ErrorState) -> Result<Self> {
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("error state"));
        }
        Ok(self.retract(dx))
    }

    /// Infallible retraction for callers that already checked finiteness.
    pub(crate) fn retract(&self, dx: &ErrorState) -> Self {
        let seg = |o: usize| dx.fixed_rows::<3>(o).into_owned();
        let attitude = self.attitude * so3_exp(&seg(block::ROT));
        Self {
            position: self.position + seg(block::POS),
            velocity: self.velocity + seg(block::VEL),
            attitude: UnitQuaternion::new_normalize(attitude.into_inner()),
            accel_bias: self.accel_bias + seg(block::BIAS_ACC),
            gyro_bias: self.gyro_bias + seg(block::BIAS_GYR),
            gravity: self.gravity + seg(block::GRAVITY),
        }
    }

    /// Manifold difference `self ⊟ base`, the inverse of [`boxplus`](Self::boxplus).
    pub fn boxminus(&self, base: &NominalState) -> ErrorState {
        let mut dx = ErrorState::zeros();
        dx.fixed_rows_mut::<3>(block::POS)
            .copy_from(&(self.position - base.position));
        dx.fixed_rows_mut::<3>(block::VEL)
            .copy_from(&(self.velocity - base.velocity));
        dx.fixed_rows_mut::<3>(block::ROT)
            .copy_from(&so3_log(&(base.attitude.inverse() * self.attitude)));
        dx.fixed_rows_mut::<3>(block::BIAS_ACC)
            .copy_from(&(self.accel_bias - base.accel_bias));
        dx.fixed_rows_mut::<3>(block::BIAS_GYR)
            .copy_from(&(self.gyro_bias - base.gyro_bias));
        dx.fixed_rows_mut::<3>(block::GRAVITY)
            .copy_from(&(self.gravity - base.gravity));
        dx
    }
}

/// One IMU measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub timestamp: f64,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

impl ImuSample {
    pub fn new(timestamp: f64, accel: Vector3<f64>, gyro: Vector3<f64>) -> Self {
        Self {
            timestamp,
            accel,
            gyro,
        }
    }

    /// Linear interpolation of the measurement at `t` between `self` and `next`.
    pub fn lerp(&self, next: &ImuSample, t: f64) -> ImuSample {
        let span = next.timestamp - self.timestamp;
        let a = if span > 0.0 {
            ((t - self.timestamp) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        ImuSample {
            timestamp: t,
            accel: self.accel.lerp(&next.accel, a),
            gyro: self.gyro.lerp(&next.gyro, a),
        }
    }
}

/// Continuous-time IMU noise standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuNoiseParams {
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s³/√Hz
    pub accel_bias_walk: f64,
    /// rad/s²/√Hz
    pub gyro_bias_walk: f64,
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        Self {
            accel_noise_density: 0.01,
            gyro_noise_density: 0.001,
            accel_bias_walk: 1e-4,
            gyro_bias_walk: 1e-4,
        }
    }
}

impl ImuNoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.accel_noise_density,
            self.gyro_noise_density,
            self.accel_bias_walk,
            self.gyro_bias_walk,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "IMU noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Lidar-to-IMU extrinsic: `p_imu = R p_lidar + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicCalib {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for ExtrinsicCalib {
    fn default() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::new(0.04, 0.0, 0.08),
        }
    }
}

impl ExtrinsicCalib {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn lidar_to_body(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn body_to_lidar(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }
}

/// Makes a matrix exactly symmetric by averaging it with its transpose.
pub fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    for i in 0..N {
        for j in (i + 1)..N {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
