//! Forward propagation and motion compensation on a fast spin.
//!
//! Integrates one second of noise-free IMU data, then removes the
//! rotation blur from a single scan.
//!
//! cargo run --release --example imu_propagation

use rcvox_lio::propagation::{propagate_through, undistort};
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};
use rcvox_lio::state::{Covariance, ImuNoiseParams, NominalState};

fn main() -> rcvox_lio::Result<()> {
    let sensors = SensorConfig::noise_free();
    let world = WorldModel::room();
    let seq = generate(&world, &TrajectoryProfile::spin(10.0, 3.0), &sensors, 1)?;
    let gt = &seq.ground_truth;

    let (t0, t1) = (1.0, 2.0);
    let s0 = gt.samples[(t0 * gt.rate) as usize];
    let x0 = NominalState {
        position: s0.position,
        velocity: s0.velocity,
        attitude: s0.attitude,
        ..Default::default()
    };
    let p0 = Covariance::identity() * 1e-6;
    let out = propagate_through(&x0, &p0, &seq.imu, t0, t1, &ImuNoiseParams::default())?;
    let (q_true, p_true) = gt.pose_at(t1);
    println!(
        "after {:.1} s and {} steps: position error {:.2e} m, attitude error {:.2e} rad",
        t1 - t0,
        out.transitions.len(),
        (out.state.position - p_true).norm(),
        out.state.attitude.angle_to(&q_true)
    );
    println!(
        "position std grew from {:.1e} to {:.1e} m",
        p0[(0, 0)].sqrt(),
        out.covariance[(0, 0)].sqrt()
    );

    // A scan inside the propagated span, undistorted to its end time.
    let scan = seq
        .scans
        .iter()
        .find(|s| s.t_start >= t0 && s.t_end <= t1)
        .unwrap();
    let fixed = undistort(&scan.points, &out.spline, scan.t_end, &sensors.extrinsic)?;
    let (q, p) = gt.pose_at(scan.t_end);
    let plane_error = |pts: &mut dyn Iterator<Item = nalgebra::Vector3<f64>>| {
        let (mut sum, mut n) = (0.0, 0);
        for l in pts {
            let w = q * sensors.extrinsic.lidar_to_body(&l) + p;
            sum += world
                .planes
                .iter()
                .map(|pl| pl.signed_distance(&w).abs())
                .fold(f64::INFINITY, f64::min);
            n += 1;
        }
        sum / n as f64
    };
    println!(
        "mean distance to the nearest wall at scan end: raw {:.3} m, undistorted {:.2e} m",
        plane_error(&mut scan.points.iter().map(|t| t.p)),
        plane_error(&mut fixed.iter().map(|t| t.p))
    );
    Ok(())
}
