//! Iterated point-to-plane update pulling a displaced pose back onto the map.
//!
//! cargo run --release --example iterated_update

use nalgebra::{UnitQuaternion, Vector3};
use rcvox_lio::map::{RcVoxConfig, RcVoxMap};
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};
use rcvox_lio::state::{Covariance, NominalState};
use rcvox_lio::subframe::{preprocess, PreprocessConfig};
use rcvox_lio::update::{iterated_update, IekfConfig};

fn main() -> rcvox_lio::Result<()> {
    let sensors = SensorConfig::default();
    let seq = generate(
        &WorldModel::room(),
        &TrajectoryProfile::stationary(1.0),
        &sensors,
        4,
    )?;
    let calib = sensors.extrinsic;
    let pre = PreprocessConfig::default();

    let mut map = RcVoxMap::initialize(RcVoxConfig::default(), Vector3::zeros())?;
    for scan in &seq.scans[..3] {
        let world: Vec<_> = preprocess(&scan.points, &pre)
            .iter()
            .map(|pt| {
                let (q, p) = seq.ground_truth.pose_at(pt.t);
                q * calib.lidar_to_body(&pt.p) + p
            })
            .collect();
        map.insert(&world);
    }
    println!("map holds {} points", map.point_count());

    let scan = &seq.scans[8];
    let points: Vec<_> = preprocess(&scan.points, &pre).iter().map(|p| p.p).collect();
    let (q, p) = seq.ground_truth.pose_at(scan.t_end);
    let x0 = NominalState {
        position: p + Vector3::new(0.15, -0.1, 0.05),
        attitude: q * UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, 0.02)),
        ..Default::default()
    };
    let mut prior = Covariance::identity() * 1e-4;
    for i in 0..9 {
        prior[(i, i)] = 0.05;
    }

    let out = iterated_update(&x0, &prior, &points, &map, &calib, &IekfConfig::default())?;
    println!(
        "{} points, {} matched, {} iterations, converged: {}",
        points.len(),
        out.match_count,
        out.iterations,
        out.converged
    );
    for (i, c) in out.corrections.iter().enumerate() {
        println!("  iteration {}: correction {:.2e}", i + 1, c);
    }
    println!(
        "position error {:.4} m -> {:.4} m, yaw error {:.4} rad -> {:.4} rad",
        (x0.position - p).norm(),
        (out.state.position - p).norm(),
        x0.attitude.angle_to(&q),
        out.state.attitude.angle_to(&q)
    );
    println!(
        "position std {:.3} m -> {:.4} m",
        prior[(0, 0)].sqrt(),
        out.covariance[(0, 0)].sqrt()
    );
    Ok(())
}
