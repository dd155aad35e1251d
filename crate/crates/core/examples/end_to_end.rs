//! Full odometry run on the simulated room loop.
//!
//! cargo run --release --example end_to_end [trajectory.txt]

use rcvox_lio::io::write_tum;
use rcvox_lio::pipeline::{run, PipelineConfig, Sequence};
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};

fn main() -> rcvox_lio::Result<()> {
    let sim = generate(
        &WorldModel::room(),
        &TrajectoryProfile::gentle(),
        &SensorConfig::default(),
        7,
    )?;
    let out = run(&PipelineConfig::default(), &Sequence::from(&sim))?;
    let m = &out.metrics;
    println!(
        "{} scans, {} sub-frames, histogram {:?}",
        m.scans, m.subframes, m.subframe_histogram
    );
    println!(
        "ATE {:.4} m, RTE per 10 m {:.4} m",
        m.ate_rmse.unwrap_or(f64::NAN),
        m.rte_per_10m.unwrap_or(f64::NAN)
    );
    let t = &m.timing_ms;
    println!(
        "ms per scan: sub-frame {:.3}, propagation+update {:.3}, smooth+integrity {:.3}, mapping {:.3}, total {:.3}",
        t.subframe, t.propagation_update, t.smooth_integrity, t.mapping, t.total
    );
    println!(
        "map: {} points in {} grids, {:.1} MiB",
        m.map.points,
        m.map.occupied_grids,
        m.map.memory_bytes as f64 / (1 << 20) as f64
    );
    if let Some(path) = std::env::args().nth(1) {
        write_tum(std::path::Path::new(&path), &out.trajectory)?;
        println!("wrote {} poses to {path}", out.trajectory.len());
    }
    Ok(())
}
