//! Replay of a recorded insert/delete/query workload against the map structures.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{brute_force_knn, KdTree, MapPoint, RcVoxConfig, RcVoxMap};
use crate::sim::{generate, profile_by_name, world_by_name, SensorConfig, SimSequence};
use crate::subframe::{preprocess, PreprocessConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub world: String,
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub workloads: Vec<WorkloadSpec>,
    /// Scans replayed per workload; shorter sequences are used whole.
    pub scans: usize,
    pub k: usize,
    /// Edge of the cells used to drop repeat inserts of the same surface spot.
    pub dedup_cell: f64,
    pub include_brute_force: bool,
    /// Brute force answers only every n-th query of each scan.
    pub brute_force_query_stride: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            workloads: vec![WorkloadSpec {
                world: "room".into(),
                profile: "gentle".into(),
            }],
            scans: 600,
            k: 5,
            dedup_cell: 0.1,
            include_brute_force: true,
            brute_force_query_stride: 100,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workloads.is_empty()
            || self.scans == 0
            || self.k == 0
            || self.brute_force_query_stride == 0
        {
            return Err(Error::InvalidConfig(
                "benchmark needs workloads, and scans, k and brute_force_query_stride of at least 1".into(),
            ));
        }
        if !(self.dedup_cell > 0.0) {
            return Err(Error::InvalidConfig(
                "benchmark dedup_cell must be positive".into(),
            ));
        }
        for w in &self.workloads {
            world_by_name(&w.world)?;
            profile_by_name(&w.profile)?;
        }
        Ok(())
    }
}

/// Map operations issued after one scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanOps {
    pub robot: Vector3<f64>,
    pub inserts: Vec<Vector3<f64>>,
    pub queries: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Workload {
    pub name: String,
    pub scans: Vec<ScanOps>,
}

impl Workload {
    pub fn query_count(&self) -> usize {
        self.query_count_strided(1)
    }

    pub fn query_count_strided(&self, stride: usize) -> usize {
        self.scans
            .iter()
            .map(|s| s.queries.len().div_ceil(stride))
            .sum()
    }

    /// Records the operations a mapping front end would issue on `seq`, using ground-truth
    /// poses: every downsampled point is queried, and points on not-yet-mapped cells are inserted.
    pub fn record(name: &str, seq: &SimSequence, max_scans: usize, dedup_cell: f64) -> Self {
        let calib = &seq.sensors.extrinsic;
        let pre = PreprocessConfig::default();
        let mut seen = HashSet::new();
        let scans = seq
            .scans
            .iter()
            .take(max_scans)
            .map(|scan| {
                let queries: Vec<_> = preprocess(&scan.points, &pre)
                    .iter()
                    .map(|pt| {
                        let (q, p) = seq.ground_truth.pose_at(pt.t);
                        q * (calib.rotation * pt.p + calib.translation) + p
                    })
                    .collect();
                let inserts = queries
                    .iter()
                    .filter(|p| {
                        let c = (*p / dedup_cell).map(|v| v.floor() as i64);
                        seen.insert((c.x, c.y, c.z))
                    })
                    .copied()
                    .collect();
                ScanOps {
                    robot: seq.ground_truth.pose_at(scan.t_end).1,
                    inserts,
                    queries,
                }
            })
            .collect();
        Self {
            name: name.into(),
            scans,
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub structure: String,
    pub workload: String,
    pub scans: usize,
    pub queries: usize,
    pub insert_ms: f64,
    pub delete_ms: f64,
    pub knn_ms: f64,
    pub total_ms: f64,
    /// Peak footprint over the replay.
    pub memory_bytes: usize,
}

pub const CSV_HEADER: &str =
    "structure,workload,scans,queries,insert_ms,delete_ms,knn_ms,total_ms,memory_bytes";

#[derive(Default)]
struct Clock {
    insert: f64,
    delete: f64,
    knn: f64,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn row(structure: &str, w: &Workload, queries: usize, c: Clock, memory_bytes: usize) -> BenchRow {
    BenchRow {
        structure: structure.into(),
        workload: w.name.clone(),
        scans: w.scans.len(),
        queries,
        insert_ms: c.insert,
        delete_ms: c.delete,
        knn_ms: c.knn,
        total_ms: c.insert + c.delete + c.knn,
        memory_bytes,
    }
}

/// Sum of the returned distances, kept so the optimiser cannot drop the queries.
pub type Checksum = f64;

pub fn replay_rcvox(w: &Workload, cfg: &RcVoxConfig, k: usize) -> Result<(BenchRow, Checksum)> {
    let first = w
        .scans
        .first()
        .map(|s| s.robot)
        .unwrap_or_else(Vector3::zeros);
    let mut map = RcVoxMap::initialize(*cfg, first)?;
    let (mut c, mut peak, mut sum) = (Clock::default(), 0, 0.0);
    for ops in &w.scans {
        let t = Instant::now();
        map.update_origin(ops.robot);
        c.delete += ms(t);
        let t = Instant::now();
        map.insert(&ops.inserts);
        c.insert += ms(t);
        let t = Instant::now();
        for q in &ops.queries {
            if let Ok(nn) = map.knn(q, k) {
                sum += nn.iter().map(|n| n.dist2).sum::<f64>();
            }
        }
        c.knn += ms(t);
        peak = peak.max(map.memory_bytes());
    }
    Ok((row("rcvox", w, w.query_count(), c, peak), sum))
}

/// Point-list baseline: drops points outside the `half_extent` cube, appends, and queries.
/// With `tree` set, a kd-tree is rebuilt from the list after every scan's inserts.
fn replay_list(
    w: &Workload,
    half_extent: f64,
    k: usize,
    tree: bool,
    stride: usize,
) -> (BenchRow, Checksum) {
    let mut points: Vec<MapPoint> = Vec::new();
    let (mut c, mut peak, mut sum, mut next_id) = (Clock::default(), 0, 0.0, 0u64);
    for ops in &w.scans {
        let t = Instant::now();
        points.retain(|m| (m.p - ops.robot).amax() <= half_extent);
        c.delete += ms(t);
        let t = Instant::now();
        for p in ops
            .inserts
            .iter()
            .filter(|p| (*p - ops.robot).amax() <= half_extent)
        {
            points.push(MapPoint { id: next_id, p: *p });
            next_id += 1;
        }
        let kd = tree.then(|| KdTree::build(&points));
        c.insert += ms(t);
        let t = Instant::now();
        for q in ops.queries.iter().step_by(stride) {
            let nn = match &kd {
                Some(kd) => kd.knn(q, k),
                None => brute_force_knn(&points, q, k),
            };
            sum += nn.iter().map(|n| n.dist2).sum::<f64>();
        }
        c.knn += ms(t);
        let bytes = match &kd {
            Some(kd) => kd.memory_bytes(),
            None => points.capacity() * std::mem::size_of::<MapPoint>(),
        };
        peak = peak.max(bytes);
    }
    let name = if tree { "kdtree" } else { "brute_force" };
    (row(name, w, w.query_count_strided(stride), c, peak), sum)
}

pub fn replay_kdtree(w: &Workload, half_extent: f64, k: usize) -> (BenchRow, Checksum) {
    replay_list(w, half_extent, k, true, 1)
}

/// Brute force over every `query_stride`-th query of each scan.
pub fn replay_brute_force(
    w: &Workload,
    half_extent: f64,
    k: usize,
    query_stride: usize,
) -> (BenchRow, Checksum) {
    replay_list(w, half_extent, k, false, query_stride.max(1))
}

/// Simulates each workload and replays it on every structure. Rows come out workload-major.
pub fn run_benchmark(
    cfg: &BenchConfig,
    map: &RcVoxConfig,
    sensors: &SensorConfig,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    map.validate()?;
    let half_extent = map.lambda * map.lidar_range;
    let mut rows = Vec::new();
    for spec in &cfg.workloads {
        let seq = generate(
            &world_by_name(&spec.world)?,
            &profile_by_name(&spec.profile)?,
            sensors,
            seed,
        )?;
        let w = Workload::record(
            &format!("{}_{}", spec.world, spec.profile),
            &seq,
            cfg.scans,
            cfg.dedup_cell,
        );
        log::info!(
            "workload {}: {} scans, {} queries",
            w.name,
            w.scans.len(),
            w.query_count()
        );
        rows.push(replay_rcvox(&w, map, cfg.k)?.0);
        rows.push(replay_kdtree(&w, half_extent, cfg.k).0);
        if cfg.include_brute_force {
            rows.push(replay_brute_force(&w, half_extent, cfg.k, cfg.brute_force_query_stride).0);
        }
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            r.structure,
            r.workload,
            r.scans,
            r.queries,
            r.insert_ms,
            r.delete_ms,
            r.knn_ms,
            r.total_ms,
            r.memory_bytes
        )?;
    }
    f.flush()?;
    Ok(())
}
