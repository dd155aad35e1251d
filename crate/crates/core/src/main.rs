use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rcvox_lio::bench::{run_benchmark, write_csv};
use rcvox_lio::config::AppConfig;
use rcvox_lio::eval::{evaluate_ate, evaluate_rte};
use rcvox_lio::io::{self, LidarFormat, METRICS_FILE, TRAJECTORY_FILE};
use rcvox_lio::pipeline::{run, Sequence};
use rcvox_lio::sim::{generate, profile_by_name, world_by_name};
use rcvox_lio::Error;

#[derive(Parser)]
#[command(
    name = "rcvox-lio",
    version,
    about = "Lidar-inertial odometry on simulated or recorded sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_enum, default_value_t = LidarFormat::Bin)]
        lidar_format: LidarFormat,
    },
    /// Run odometry, writing trajectory.txt and metrics.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Sequence directory; simulated from the config when omitted.
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Fixed sub-frame count per scan.
        #[arg(long)]
        force_subframes: Option<usize>,
        #[arg(long)]
        no_smoothing: bool,
    },
    /// Score a trajectory file against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Time RC-Vox against the kd-tree and brute-force baselines.
    BenchMap {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize)]
struct Evaluation {
    ate_rmse: f64,
    matched: usize,
    rte_per_10m: Option<f64>,
}

fn load(common: &Common) -> rcvox_lio::Result<AppConfig> {
    let mut cfg = match &common.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn save_config(cfg: &AppConfig, out: &Path) -> rcvox_lio::Result<()> {
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

fn simulate(cfg: &AppConfig) -> rcvox_lio::Result<rcvox_lio::sim::SimSequence> {
    let s = &cfg.simulation;
    generate(
        &world_by_name(&s.world)?,
        &profile_by_name(&s.profile)?,
        &s.sensors,
        cfg.seed,
    )
}

/// Returns `Ok(true)` when tracking was lost.
fn execute(cmd: Command) -> rcvox_lio::Result<bool> {
    match cmd {
        Command::Simulate {
            common,
            world,
            profile,
            lidar_format,
        } => {
            let mut cfg = load(&common)?;
            if let Some(w) = world {
                cfg.simulation.world = w;
            }
            if let Some(p) = profile {
                cfg.simulation.profile = p;
            }
            cfg.validate()?;
            let seq = simulate(&cfg)?;
            io::write_sim_sequence(&common.out, &seq, lidar_format)?;
            save_config(&cfg, &common.out)?;
            println!(
                "wrote {} scans to {}",
                seq.scans.len(),
                common.out.display()
            );
            Ok(false)
        }
        Command::Run {
            common,
            sequence,
            force_subframes,
            no_smoothing,
        } => {
            let mut cfg = load(&common)?;
            if force_subframes.is_some() {
                cfg.pipeline.force_subframes = force_subframes;
            }
            if no_smoothing {
                cfg.pipeline.smoother.enabled = false;
            }
            cfg.validate()?;
            let seq = match &sequence {
                Some(dir) => io::read_sequence(dir)?,
                None => Sequence::from(&simulate(&cfg)?),
            };
            let out = run(&cfg.pipeline, &seq)?;
            io::write_tum(&common.out.join(TRAJECTORY_FILE), &out.trajectory)?;
            io::write_metrics(&common.out.join(METRICS_FILE), &out.metrics)?;
            save_config(&cfg, &common.out)?;
            let m = &out.metrics;
            println!(
                "{} scans, {} sub-frames, ATE {}, RTE/10m {}, {:.2} ms/scan",
                m.scans,
                m.subframes,
                m.ate_rmse.map_or("n/a".into(), |v| format!("{v:.4} m")),
                m.rte_per_10m.map_or("n/a".into(), |v| format!("{v:.4} m")),
                m.timing_ms.total
            );
            if let Some(a) = &out.aborted {
                eprintln!("tracking lost at t = {:.3} s: {}", a.time, a.reason);
            }
            Ok(out.aborted.is_some())
        }
        Command::Evaluate {
            common,
            estimate,
            ground_truth,
        } => {
            load(&common)?;
            let est = io::read_tum(&estimate)?;
            let gt = io::read_tum(&ground_truth)?;
            let ate = evaluate_ate(&est, &gt)?;
            let rte = evaluate_rte(&est, &gt, 10.0).ok().map(|r| r.rmse);
            let report = Evaluation {
                ate_rmse: ate.rmse,
                matched: ate.matched,
                rte_per_10m: rte,
            };
            let json = serde_json::to_string_pretty(&report).expect("plain struct serializes");
            fs::write(common.out.join("evaluation.json"), json + "\n")?;
            println!(
                "ATE {:.6} m over {} poses, RTE/10m {:?}",
                ate.rmse, ate.matched, rte
            );
            Ok(false)
        }
        Command::BenchMap { common } => {
            let cfg = load(&common)?;
            let rows = run_benchmark(
                &cfg.benchmark,
                &cfg.pipeline.map,
                &cfg.simulation.sensors,
                cfg.seed,
            )?;
            let path = common.out.join("bench_map.csv");
            write_csv(&path, &rows)?;
            for r in &rows {
                println!(
                    "{:<12} {:<20} total {:>10.1} ms",
                    r.structure, r.workload, r.total_ms
                );
            }
            println!("wrote {}", path.display());
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(2),
                Error::TrackingFailure { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
