//! Generates a simulated sequence and writes it in the on-disk format.
//!
//! cargo run --release --example simulate_sequence [world] [profile] [out_dir]

use std::path::PathBuf;

use rcvox_lio::io::{read_sequence, write_sim_sequence, LidarFormat};
use rcvox_lio::sim::{generate, profile_by_name, world_by_name, SensorConfig};

fn main() -> rcvox_lio::Result<()> {
    let mut args = std::env::args().skip(1);
    let world = args.next().unwrap_or_else(|| "room".into());
    let profile = args.next().unwrap_or_else(|| "gentle".into());
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("rcvox_{world}_{profile}")));

    let seq = generate(
        &world_by_name(&world)?,
        &profile_by_name(&profile)?,
        &SensorConfig::default(),
        7,
    )?;
    let points: usize = seq.scans.iter().map(|s| s.points.len()).sum();
    println!(
        "{world}/{profile}: {:.1} s, {:.1} m travelled, {} IMU samples, {} scans, {points} points",
        seq.ground_truth.end(),
        seq.ground_truth.path_length(),
        seq.imu.len(),
        seq.scans.len()
    );

    write_sim_sequence(&out, &seq, LidarFormat::Bin)?;
    let back = read_sequence(&out)?;
    println!(
        "wrote {} and read back {} scans",
        out.display(),
        back.scans.len()
    );
    for entry in std::fs::read_dir(&out)? {
        let entry = entry?;
        println!(
            "  {:<20} {:>10} bytes",
            entry.file_name().to_string_lossy(),
            entry.metadata()?.len()
        );
    }
    Ok(())
}
