//! Sequence and result file formats.
//!
//! A sequence directory holds
//!
//! * `imu.csv`: `timestamp,ax,ay,az,gx,gy,gz`, one sample per line.
//! * `scans.csv`: `index,t_start,t_end,points`, the sweep boundaries of the lidar stream.
//! * `lidar.bin`: little-endian records of `f64 timestamp, f32 x, f32 y, f32 z, f32 intensity`
//!   (24 bytes), sweeps back to back in `scans.csv` order.
//! * `lidar.csv`: the same stream as text, `timestamp,x,y,z,intensity`. Read only when
//!   `lidar.bin` is absent.
//! * `ground_truth.txt` (optional): poses as `timestamp tx ty tz qx qy qz qw`.
//! * `sequence.toml` (optional): generator metadata.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::StampedPose;
use crate::pipeline::{MetricsReport, Sequence};
use crate::sim::{SensorConfig, SimSequence};
use crate::state::ImuSample;
use crate::subframe::{Scan, TimedPoint};

pub const IMU_FILE: &str = "imu.csv";
pub const SCANS_FILE: &str = "scans.csv";
pub const LIDAR_BIN_FILE: &str = "lidar.bin";
pub const LIDAR_CSV_FILE: &str = "lidar.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";
pub const META_FILE: &str = "sequence.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const METRICS_FILE: &str = "metrics.json";

/// Bytes per binary lidar record.
pub const LIDAR_RECORD_BYTES: usize = 24;

/// Generator metadata stored next to a simulated sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub world: String,
    pub profile: String,
    pub seed: u64,
    pub sensors: SensorConfig,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        out.push((i + 1, s.to_string()));
    }
    Ok(out)
}

fn parse_fields(
    path: &Path,
    line_no: usize,
    line: &str,
    sep: Option<char>,
    n: usize,
) -> Result<Vec<f64>> {
    let fields: Vec<&str> = match sep {
        Some(c) => line.split(c).map(str::trim).collect(),
        None => line.split_whitespace().collect(),
    };
    if fields.len() != n {
        return Err(format_err(
            path,
            format!(
                "line {line_no}: expected {n} fields, found {}",
                fields.len()
            ),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| {
                format_err(
                    path,
                    format!("line {line_no}: cannot parse '{f}' as a number"),
                )
            })
        })
        .collect()
}

/// Drops a leading header row whose first field is not numeric.
fn skip_header(lines: &mut Vec<(usize, String)>, sep: char) {
    if let Some((_, first)) = lines.first() {
        let head = first.split(sep).next().unwrap_or("").trim();
        if head.parse::<f64>().is_err() {
            lines.remove(0);
        }
    }
}

pub fn write_imu_csv(path: &Path, imu: &[ImuSample]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "timestamp,ax,ay,az,gx,gy,gz")?;
    for s in imu {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.timestamp, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let mut lines = data_lines(path)?;
    skip_header(&mut lines, ',');
    lines
        .iter()
        .map(|(n, l)| {
            let v = parse_fields(path, *n, l, Some(','), 7)?;
            Ok(ImuSample::new(
                v[0],
                Vector3::new(v[1], v[2], v[3]),
                Vector3::new(v[4], v[5], v[6]),
            ))
        })
        .collect()
}

fn write_scan_index(path: &Path, scans: &[Scan]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "index,t_start,t_end,points")?;
    for (i, s) in scans.iter().enumerate() {
        writeln!(w, "{i},{:?},{:?},{}", s.t_start, s.t_end, s.points.len())?;
    }
    w.flush()?;
    Ok(())
}

fn read_scan_index(path: &Path) -> Result<Vec<(f64, f64, usize)>> {
    let mut lines = data_lines(path)?;
    skip_header(&mut lines, ',');
    lines
        .iter()
        .map(|(n, l)| {
            let v = parse_fields(path, *n, l, Some(','), 4)?;
            if v[3] < 0.0 || v[3].fract() != 0.0 {
                return Err(format_err(
                    path,
                    format!("line {n}: bad point count {}", v[3]),
                ));
            }
            Ok((v[1], v[2], v[3] as usize))
        })
        .collect()
}

/// Writes the point stream as binary records.
pub fn write_lidar_bin(path: &Path, points: impl IntoIterator<Item = TimedPoint>) -> Result<()> {
    let mut w = create(path)?;
    for pt in points {
        w.write_all(&pt.t.to_le_bytes())?;
        for c in [pt.p.x as f32, pt.p.y as f32, pt.p.z as f32, pt.intensity] {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_lidar_bin(path: &Path) -> Result<Vec<TimedPoint>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % LIDAR_RECORD_BYTES != 0 {
        return Err(format_err(
            path,
            format!(
                "size {} is not a multiple of {LIDAR_RECORD_BYTES}",
                bytes.len()
            ),
        ));
    }
    let f32_at = |r: &[u8], o: usize| f32::from_le_bytes(r[o..o + 4].try_into().unwrap());
    Ok(bytes
        .chunks_exact(LIDAR_RECORD_BYTES)
        .map(|r| TimedPoint {
            t: f64::from_le_bytes(r[0..8].try_into().unwrap()),
            p: Vector3::new(
                f32_at(r, 8) as f64,
                f32_at(r, 12) as f64,
                f32_at(r, 16) as f64,
            ),
            intensity: f32_at(r, 20),
        })
        .collect())
}

/// Text twin of the binary stream. Coordinates are written at `f32` precision so both
/// encodings decode to the same values.
pub fn write_lidar_csv(path: &Path, points: impl IntoIterator<Item = TimedPoint>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "timestamp,x,y,z,intensity")?;
    for pt in points {
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?}",
            pt.t, pt.p.x as f32, pt.p.y as f32, pt.p.z as f32, pt.intensity
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lidar_csv(path: &Path) -> Result<Vec<TimedPoint>> {
    let mut lines = data_lines(path)?;
    skip_header(&mut lines, ',');
    lines
        .iter()
        .map(|(n, l)| {
            let v = parse_fields(path, *n, l, Some(','), 5)?;
            // Round through f32 exactly as the binary encoding does.
            Ok(TimedPoint {
                t: v[0],
                p: Vector3::new(v[1] as f32 as f64, v[2] as f32 as f64, v[3] as f32 as f64),
                intensity: v[4] as f32,
            })
        })
        .collect()
}

/// Writes poses as `timestamp tx ty tz qx qy qz qw` with fixed precision.
pub fn write_tum(path: &Path, poses: &[StampedPose]) -> Result<()> {
    let mut w = create(path)?;
    for p in poses {
        let q = p.attitude.quaternion();
        writeln!(
            w,
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            p.t, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tum(path: &Path) -> Result<Vec<StampedPose>> {
    let lines = data_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (n, l) in &lines {
        let v = parse_fields(path, *n, l, None, 8)?;
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if q.norm() < 1e-6 {
            return Err(format_err(path, format!("line {n}: zero quaternion")));
        }
        out.push(StampedPose::new(
            v[0],
            Vector3::new(v[1], v[2], v[3]),
            UnitQuaternion::from_quaternion(q),
        ));
    }
    if let Some(i) = out.windows(2).position(|w| w[1].t <= w[0].t) {
        return Err(Error::Unsorted { index: i + 1 });
    }
    Ok(out)
}

pub fn write_metrics(path: &Path, metrics: &MetricsReport) -> Result<()> {
    let json =
        serde_json::to_string_pretty(metrics).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| format_err(path, e.to_string()))
}

/// Ground-truth poses at every `stride`-th sample.
pub fn ground_truth_poses(seq: &SimSequence, stride: usize) -> Vec<StampedPose> {
    seq.ground_truth
        .samples
        .iter()
        .step_by(stride.max(1))
        .map(|s| StampedPose::new(s.t, s.position, s.attitude))
        .collect()
}

/// Encoding of the lidar stream in a sequence directory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LidarFormat {
    #[default]
    Bin,
    Csv,
}

/// Writes a simulated sequence into `dir`, creating it if needed.
pub fn write_sim_sequence(dir: &Path, seq: &SimSequence, format: LidarFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_imu_csv(&dir.join(IMU_FILE), &seq.imu)?;
    write_scan_index(&dir.join(SCANS_FILE), &seq.scans)?;
    let stream = seq.scans.iter().flat_map(|s| s.points.iter().copied());
    match format {
        LidarFormat::Bin => write_lidar_bin(&dir.join(LIDAR_BIN_FILE), stream)?,
        LidarFormat::Csv => write_lidar_csv(&dir.join(LIDAR_CSV_FILE), stream)?,
    }
    // 1 kHz truth thinned to 200 Hz keeps the file small and still within the association window.
    write_tum(&dir.join(GROUND_TRUTH_FILE), &ground_truth_poses(seq, 5))?;
    let meta = SequenceMeta {
        world: seq.world.clone(),
        profile: seq.profile.clone(),
        seed: seq.seed,
        sensors: seq.sensors,
    };
    let text =
        toml::to_string(&meta).map_err(|e| format_err(&dir.join(META_FILE), e.to_string()))?;
    fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<Option<SequenceMeta>> {
    let path = dir.join(META_FILE);
    if !path.exists() {
        return Ok(None);
    }
    toml::from_str(&fs::read_to_string(&path)?)
        .map(Some)
        .map_err(|e| format_err(&path, e.to_string()))
}

/// Loads a sequence directory. Prefers `lidar.bin` over `lidar.csv`.
pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let imu = read_imu_csv(&dir.join(IMU_FILE))?;
    let index_path = dir.join(SCANS_FILE);
    let index = read_scan_index(&index_path)?;
    let bin: PathBuf = dir.join(LIDAR_BIN_FILE);
    let points = if bin.exists() {
        read_lidar_bin(&bin)?
    } else {
        read_lidar_csv(&dir.join(LIDAR_CSV_FILE))?
    };
    let expected: usize = index.iter().map(|s| s.2).sum();
    if expected != points.len() {
        return Err(format_err(
            &index_path,
            format!(
                "index lists {expected} points but the stream holds {}",
                points.len()
            ),
        ));
    }
    let mut rest = points.as_slice();
    let mut scans = Vec::with_capacity(index.len());
    for (t_start, t_end, n) in index {
        let (head, tail) = rest.split_at(n);
        rest = tail;
        scans.push(Scan {
            t_start,
            t_end,
            points: head.to_vec(),
        });
    }
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = if gt_path.exists() {
        Some(read_tum(&gt_path)?)
    } else {
        None
    };
    let seq = Sequence {
        imu,
        scans,
        ground_truth,
    };
    seq.validate()?;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<TimedPoint> {
        (0..50)
            .map(|i| TimedPoint {
                t: 0.1 + i as f64 * 1e-4,
                p: Vector3::new(1.0 + i as f64 * 0.37, -2.5 * i as f64 / 7.0, 0.123456789),
                intensity: i as f32 * 0.5,
            })
            .collect()
    }

    #[test]
    fn lidar_encodings_agree() {
        let dir = tempfile::tempdir().unwrap();
        let (b, c) = (dir.path().join("l.bin"), dir.path().join("l.csv"));
        write_lidar_bin(&b, points()).unwrap();
        write_lidar_csv(&c, points()).unwrap();
        assert_eq!(
            fs::metadata(&b).unwrap().len() as usize,
            50 * LIDAR_RECORD_BYTES
        );
        let (pb, pc) = (read_lidar_bin(&b).unwrap(), read_lidar_csv(&c).unwrap());
        assert_eq!(pb, pc);
        for (a, e) in pb.iter().zip(points()) {
            assert_eq!(a.t, e.t);
            assert!((a.p - e.p).amax() < 1e-6);
        }
    }

    #[test]
    fn binary_layout_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.bin");
        let pt = TimedPoint {
            t: 1.5,
            p: Vector3::new(1.0, -2.0, 0.5),
            intensity: 3.0,
        };
        write_lidar_bin(&path, [pt]).unwrap();
        let bytes = fs::read(&path).unwrap();
        let mut expected = 1.5f64.to_le_bytes().to_vec();
        for c in [1.0f32, -2.0, 0.5, 3.0] {
            expected.extend(c.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        fs::write(&path, &bytes[..23]).unwrap();
        assert!(read_lidar_bin(&path).is_err());
    }

    #[test]
    fn imu_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let imu: Vec<_> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.005;
                ImuSample::new(
                    t,
                    Vector3::new(0.1 * t, -9.81, 1.0 / 3.0),
                    Vector3::new(t.sin(), 0.0, -t),
                )
            })
            .collect();
        write_imu_csv(&path, &imu).unwrap();
        assert_eq!(read_imu_csv(&path).unwrap(), imu);
    }

    #[test]
    fn tum_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let poses: Vec<_> = (0..10)
            .map(|i| {
                let s = i as f64 * 0.3;
                StampedPose::new(
                    s,
                    Vector3::new(s, 2.0 * s, -s),
                    UnitQuaternion::from_euler_angles(s, -0.5 * s, 0.1),
                )
            })
            .collect();
        write_tum(&path, &poses).unwrap();
        let first = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(first.split(' ').count(), 8);
        let back = read_tum(&path).unwrap();
        for (a, b) in back.iter().zip(&poses) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert!((a.position - b.position).amax() < 1e-8);
            assert!(a.attitude.angle_to(&b.attitude) < 1e-8);
        }
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "timestamp,ax,ay,az,gx,gy,gz\n0.0,1,2,3,4,5\n").unwrap();
        assert!(matches!(read_imu_csv(&path), Err(Error::Format { .. })));
        fs::write(&path, "0.0,1,2,3,4,5,x\n").unwrap();
        assert!(matches!(read_imu_csv(&path), Err(Error::Format { .. })));
        let tum = dir.path().join("t.txt");
        fs::write(&tum, "1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n").unwrap();
        assert!(matches!(read_tum(&tum), Err(Error::Unsorted { index: 1 })));
    }
}
