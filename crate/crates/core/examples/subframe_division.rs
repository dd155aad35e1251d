//! Motion-adaptive sub-frame division on the aggressive profile.
//!
//! cargo run --release --example subframe_division

use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};
use rcvox_lio::subframe::{
    compute_motion_stats, imu_window, preprocess, split_scan, subframe_count, DividerConfig,
    PreprocessConfig, Scan,
};

fn main() -> rcvox_lio::Result<()> {
    let seq = generate(
        &WorldModel::room(),
        &TrajectoryProfile::aggressive(),
        &SensorConfig::default(),
        7,
    )?;
    let divider = DividerConfig::default();
    let pre = PreprocessConfig::default();
    println!(
        "{:>6} {:>8} {:>8} {:>3}  points per sub-frame",
        "t", "σ_acc", "σ_gyr", "n"
    );
    let mut histogram = [0usize; 16];
    for scan in &seq.scans {
        let stats = compute_motion_stats(imu_window(&seq.imu, scan.t_start, scan.t_end))?;
        let n = subframe_count(&stats, &divider);
        histogram[n] += 1;
        let reduced = Scan {
            t_start: scan.t_start,
            t_end: scan.t_end,
            points: preprocess(&scan.points, &pre),
        };
        let frames = split_scan(&reduced, n, &seq.imu)?;
        // Every 20th scan is enough to see the count follow the motion.
        if (scan.t_start * 10.0).round() as usize % 20 == 0 {
            let counts: Vec<_> = frames.iter().map(|f| f.points.len()).collect();
            println!(
                "{:>6.1} {:>8.3} {:>8.3} {:>3}  {counts:?}",
                scan.t_start,
                stats.sigma_acc.max(),
                stats.sigma_gyr.max(),
                n
            );
        }
    }
    println!("\nscans per sub-frame count:");
    for (n, c) in histogram.iter().enumerate().filter(|(_, c)| **c > 0) {
        println!("  n = {n}: {c}");
    }
    Ok(())
}
