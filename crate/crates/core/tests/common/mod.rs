#![allow(dead_code)]

pub mod cv;
pub mod fd;

use nalgebra::{SMatrix, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rcvox_lio::state::{Covariance, ErrorState, ImuSample, NominalState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn gauss3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * s)
}

pub fn uniform3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(lo..hi))
}

pub fn random_state(rng: &mut ChaCha8Rng) -> NominalState {
    NominalState {
        position: uniform3(rng, -5.0, 5.0),
        velocity: uniform3(rng, -2.0, 2.0),
        attitude: UnitQuaternion::from_scaled_axis(uniform3(rng, -2.0, 2.0)),
        accel_bias: gauss3(rng, 0.05),
        gyro_bias: gauss3(rng, 0.01),
        gravity: Vector3::new(0.0, 0.0, -9.81) + gauss3(rng, 0.05),
    }
}

pub fn random_imu(rng: &mut ChaCha8Rng, t: f64) -> ImuSample {
    ImuSample::new(
        t,
        Vector3::new(0.0, 0.0, 9.81) + gauss3(rng, 2.0),
        gauss3(rng, 1.0),
    )
}

pub fn random_spd<const N: usize>(rng: &mut ChaCha8Rng, scale: f64) -> SMatrix<f64, N, N> {
    let a = SMatrix::<f64, N, N>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    (a * a.transpose() / N as f64 + SMatrix::<f64, N, N>::identity() * 0.1) * scale
}

pub fn random_covariance(rng: &mut ChaCha8Rng, scale: f64) -> Covariance {
    random_spd::<18>(rng, scale)
}

pub fn random_error(rng: &mut ChaCha8Rng, s: f64) -> ErrorState {
    ErrorState::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * s)
}

/// Largest absolute difference relative to the largest entry of `reference`.
pub fn rel_err<const R: usize, const C: usize>(
    a: &SMatrix<f64, R, C>,
    reference: &SMatrix<f64, R, C>,
) -> f64 {
    (a - reference).amax() / reference.amax().max(1e-300)
}
