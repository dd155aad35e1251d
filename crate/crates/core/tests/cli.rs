use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rcvox_lio::bench::CSV_HEADER;
use rcvox_lio::io::{write_sim_sequence, LidarFormat};
use rcvox_lio::sim::{generate, SensorConfig, TrajectoryProfile, WorldModel};

const SMALL: &str = r#"
seed = 4

[simulation]
world = "room"
profile = "stationary"

[benchmark]
scans = 5
workloads = [
    { world = "room", profile = "gentle" },
    { world = "corridor_hall", profile = "corridor_shuttle" },
]
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcvox-lio"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_then_run_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let seq = tmp.path().join("seq");
    let out = cli(&["simulate", "--config", p(&config), "--out", p(&seq)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "imu.csv",
        "scans.csv",
        "lidar.bin",
        "ground_truth.txt",
        "sequence.toml",
        "config.toml",
    ] {
        assert!(seq.join(f).exists(), "missing {f}");
    }

    let run_dir = tmp.path().join("run");
    let out = cli(&[
        "run",
        "--config",
        p(&config),
        "--sequence",
        p(&seq),
        "--out",
        p(&run_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let traj = fs::read_to_string(run_dir.join("trajectory.txt")).unwrap();
    assert!(traj.lines().filter(|l| !l.starts_with('#')).count() > 50);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["ate_rmse"].as_f64().unwrap() < 0.05);
    assert_eq!(metrics["seed"].as_u64(), Some(4));
}

#[test]
fn seeded_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = cli(&[
            "run",
            "--config",
            p(&config),
            "--seed",
            "21",
            "--out",
            p(&dir),
        ]);
        assert!(out.status.success());
        files.push(fs::read(dir.join("trajectory.txt")).unwrap());
        let saved = fs::read_to_string(dir.join("config.toml")).unwrap();
        assert!(saved.contains("seed = 21"));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn evaluate_identical_files_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let seq = tmp.path().join("seq");
    assert!(cli(&["simulate", "--config", p(&config), "--out", p(&seq)])
        .status
        .success());
    let gt = seq.join("ground_truth.txt");
    let dir = tmp.path().join("eval");
    let out = cli(&[
        "evaluate",
        "--estimate",
        p(&gt),
        "--ground-truth",
        p(&gt),
        "--out",
        p(&dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("evaluation.json")).unwrap()).unwrap();
    assert!(report["ate_rmse"].as_f64().unwrap() < 1e-9);
}

#[test]
fn bench_map_writes_one_row_per_structure_and_workload() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let dir = tmp.path().join("bench");
    let out = cli(&["bench-map", "--config", p(&config), "--out", p(&dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.join("bench_map.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    // Two workloads against RC-Vox, kd-tree and brute force.
    assert_eq!(lines.len() - 1, 2 * 3);
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }
}

#[test]
fn bad_configuration_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    for text in [
        "[pipeline.map]\nvoxel_size = 5.0\ngrid_size = 2.0\n",
        "mystery = 1\n",
        "[simulation]\nworld = \"nowhere\"\n",
        "seed = [",
    ] {
        let config = write_config(tmp.path(), text);
        let out = cli(&["run", "--config", p(&config), "--out", p(&dir)]);
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let missing = tmp.path().join("absent.toml");
    assert_eq!(
        cli(&["run", "--config", p(&missing), "--out", p(&dir)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cli(&["run", "--bogus-flag", "--out", p(&dir)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn lost_tracking_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seq = generate(
        &WorldModel::room(),
        &TrajectoryProfile::stationary(5.0),
        &SensorConfig::default(),
        2,
    )
    .unwrap();
    for scan in seq.scans.iter_mut().filter(|s| s.t_start >= 2.0) {
        scan.points.clear();
    }
    let seq_dir = tmp.path().join("seq");
    write_sim_sequence(&seq_dir, &seq, LidarFormat::Csv).unwrap();
    let dir = tmp.path().join("run");
    let out = cli(&["run", "--sequence", p(&seq_dir), "--out", p(&dir)]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Partial results are still written.
    assert!(dir.join("trajectory.txt").exists());
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["aborted"].is_string());
}
