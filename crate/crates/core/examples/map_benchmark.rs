//! Replays a 600-scan mapping workload on RC-Vox, a per-scan rebuilt kd-tree and brute force.
//!
//! cargo run --release --example map_benchmark [out.csv]

use rcvox_lio::bench::{run_benchmark, write_csv, BenchConfig};
use rcvox_lio::map::RcVoxConfig;
use rcvox_lio::sim::SensorConfig;

fn main() -> rcvox_lio::Result<()> {
    let rows = run_benchmark(
        &BenchConfig::default(),
        &RcVoxConfig::default(),
        &SensorConfig::default(),
        7,
    )?;
    println!(
        "{:<12} {:>6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "structure", "scans", "queries", "insert", "delete", "knn", "total", "peak bytes"
    );
    for r in &rows {
        println!(
            "{:<12} {:>6} {:>8} {:>10.1} {:>10.1} {:>10.1} {:>10.1} {:>12}",
            r.structure,
            r.scans,
            r.queries,
            r.insert_ms,
            r.delete_ms,
            r.knn_ms,
            r.total_ms,
            r.memory_bytes
        );
    }
    let rc = rows.iter().find(|r| r.structure == "rcvox").unwrap();
    let kd = rows.iter().find(|r| r.structure == "kdtree").unwrap();
    println!(
        "kd-tree / rcvox total time: {:.2}x",
        kd.total_ms / rc.total_ms
    );
    if let Some(path) = std::env::args().nth(1) {
        write_csv(std::path::Path::new(&path), &rows)?;
        println!("wrote {path}");
    }
    Ok(())
}
