//! Corridor run with and without backward smoothing.
//!
//! The end wall is the only constraint along the corridor; once it drops out
//! of range, integrity detection keeps the unconstrained sub-frames out of the map.
//!
//! cargo run --release --example degeneracy_corridor

use nalgebra::Vector3;
use rcvox_lio::eval::anchored_axis_rmse;
use rcvox_lio::pipeline::{run, PipelineConfig, Sequence};
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};

fn main() -> rcvox_lio::Result<()> {
    let sim = generate(
        &WorldModel::corridor_hall(),
        &TrajectoryProfile::corridor_shuttle(),
        &SensorConfig::default(),
        7,
    )?;
    let seq = Sequence::from(&sim);
    let gt = seq.ground_truth.clone().unwrap();
    for smoothing in [true, false] {
        let mut cfg = PipelineConfig::default();
        cfg.smoother.enabled = smoothing;
        let out = run(&cfg, &seq)?;
        let along = anchored_axis_rmse(&out.trajectory, &gt, &Vector3::x())?;
        let last = out.nodes.last().unwrap();
        let c = &last.pose_covariance;
        println!("smoothing {smoothing}:");
        println!("  along-corridor RMSE {along:.3} m");
        println!(
            "  {} of {} sub-frames flagged insufficient",
            out.metrics.insufficient_subframes, out.metrics.subframes
        );
        println!(
            "  final σx {:.3} m, σy {:.4} m",
            c[(0, 0)].sqrt(),
            c[(1, 1)].sqrt()
        );
        match &out.aborted {
            Some(a) => println!("  aborted at t = {:.1} s: {}", a.time, a.reason),
            None => println!("  completed"),
        }
    }
    Ok(())
}
