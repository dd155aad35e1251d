//! Backward smoothing of a short window where only the last node is measured.
//!
//! Six nodes are propagated from IMU data without updates; a position fix at
//! the final node then tightens every earlier node once smoothed.
//!
//! cargo run --release --example backward_smoother

use nalgebra::Vector3;
use rcvox_lio::propagation::propagate_through;
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};
use rcvox_lio::smoother::{backward_smooth, check_integrity, IntegrityConfig, SmootherNode};
use rcvox_lio::state::{block, Covariance, ImuNoiseParams, NominalState};
use rcvox_lio::update::{iterate_with, IekfConfig, JacobianRow, ResidualSet};

fn main() -> rcvox_lio::Result<()> {
    let seq = generate(
        &WorldModel::room(),
        &TrajectoryProfile::gentle(),
        &SensorConfig::default(),
        2,
    )?;
    let noise = ImuNoiseParams::default();
    let s0 = seq.ground_truth.samples[1000];
    let mut x = NominalState {
        position: s0.position,
        velocity: s0.velocity,
        attitude: s0.attitude,
        ..Default::default()
    };
    let mut p = Covariance::identity() * 1e-4;
    for i in 0..3 {
        p[(block::POS + i, block::POS + i)] = 0.01;
    }

    let times: Vec<f64> = (0..6).map(|k| s0.t + 0.1 * k as f64).collect();
    let mut nodes = Vec::new();
    for w in times.windows(2) {
        let out = propagate_through(&x, &p, &seq.imu, w[0], w[1], &noise)?;
        nodes.push(SmootherNode {
            timestamp: w[0],
            filtered_state: x.clone(),
            filtered_cov: p,
            transitions: out.transitions,
        });
        x = out.state;
        p = out.covariance;
    }

    // A 1 cm position fix at the last node, expressed as three residual rows.
    let (_, truth) = seq.ground_truth.pose_at(*times.last().unwrap());
    let fix = |x: &NominalState| {
        let rows: Vec<_> = (0..3)
            .map(|i| {
                let mut row = JacobianRow::zeros();
                row[block::POS + i] = 1.0;
                (i, x.position[i] - truth[i], row, 1e-4)
            })
            .collect();
        ResidualSet::from_rows(&rows)
    };
    let upd = iterate_with(&x, &p, &IekfConfig::default(), fix)?;
    nodes.push(SmootherNode {
        timestamp: *times.last().unwrap(),
        filtered_state: upd.state,
        filtered_cov: upd.covariance,
        transitions: Vec::new(),
    });

    let smoothed = backward_smooth(&nodes)?;
    let integrity = IntegrityConfig::default();
    println!(
        "{:>6} {:>12} {:>12} {:>10} {:>10}  sufficient",
        "t", "σx filtered", "σx smoothed", "err filt", "err smooth"
    );
    for (n, s) in nodes.iter().zip(&smoothed) {
        let (_, gt) = seq.ground_truth.pose_at(n.timestamp);
        let err = |v: &Vector3<f64>| (v - gt).norm();
        println!(
            "{:>6.2} {:>12.4} {:>12.4} {:>10.4} {:>10.4}  {}",
            n.timestamp,
            n.filtered_cov[(0, 0)].sqrt(),
            s.covariance[(0, 0)].sqrt(),
            err(&n.filtered_state.position),
            err(&s.state.position),
            check_integrity(&s.covariance, &integrity).sufficient
        );
    }
    Ok(())
}
