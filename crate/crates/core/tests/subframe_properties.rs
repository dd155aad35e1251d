use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use proptest::prelude::*;

use rcvox_lio::state::ImuSample;
use rcvox_lio::subframe::{
    compute_motion_stats, preprocess, split_scan, subframe_count, DividerConfig, MotionStats,
    PreprocessConfig, Scan, TimedPoint,
};

fn v3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn sigmas() -> impl Strategy<Value = MotionStats> {
    (
        prop::array::uniform3(0.0..20.0f64),
        prop::array::uniform3(0.0..8.0f64),
    )
        .prop_map(|(a, g)| MotionStats {
            sigma_acc: Vector3::from(a),
            sigma_gyr: Vector3::from(g),
        })
}

fn divider() -> impl Strategy<Value = DividerConfig> {
    (0.1..10.0f64, 0.1..5.0f64, 1usize..12).prop_map(|(a, g, n)| DividerConfig {
        sigma_acc_max: a,
        sigma_gyr_max: g,
        n_max: n,
    })
}

fn imu_stream() -> impl Strategy<Value = Vec<ImuSample>> {
    prop::collection::vec((v3(30.0), v3(10.0)), 2..120).prop_map(|s| {
        s.into_iter()
            .enumerate()
            .map(|(i, (a, g))| ImuSample::new(i as f64 * 0.005, a, g))
            .collect()
    })
}

/// Sorted scan with points spread over `[t0, t0 + 0.1]`.
fn scan() -> impl Strategy<Value = Scan> {
    (
        0.0..100.0f64,
        prop::collection::vec((0.0..1.0f64, v3(20.0)), 0..400),
    )
        .prop_map(|(t0, raw)| {
            let mut points: Vec<_> = raw
                .into_iter()
                .map(|(u, p)| TimedPoint::new(t0 + 0.1 * u, p))
                .collect();
            points.sort_by(|a, b| a.t.total_cmp(&b.t));
            Scan {
                t_start: t0,
                t_end: t0 + 0.1,
                points,
            }
        })
}

fn imu_for(scan: &Scan) -> Vec<ImuSample> {
    (0..=30)
        .map(|i| {
            ImuSample::new(
                scan.t_start - 0.02 + i as f64 * 0.005,
                Vector3::z(),
                Vector3::zeros(),
            )
        })
        .collect()
}

/// Per-axis population standard deviation, computed with the running (Welford) update.
fn welford_sigma(values: impl Iterator<Item = Vector3<f64>>) -> Vector3<f64> {
    let mut mean = Vector3::zeros();
    let mut m2 = Vector3::zeros();
    let mut n = 0.0;
    for x in values {
        n += 1.0;
        let delta = x - mean;
        mean += delta / n;
        m2 += delta.component_mul(&(x - mean));
    }
    (m2 / n).map(f64::sqrt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn count_in_range(s in sigmas(), cfg in divider()) {
        let n = subframe_count(&s, &cfg);
        prop_assert!((1..=cfg.n_max).contains(&n));
    }

    #[test]
    fn count_monotone_in_motion(s in sigmas(), cfg in divider(), grow in prop::array::uniform2(1.0..3.0f64)) {
        let louder = MotionStats {
            sigma_acc: s.sigma_acc * grow[0],
            sigma_gyr: s.sigma_gyr * grow[1],
        };
        prop_assert!(subframe_count(&louder, &cfg) >= subframe_count(&s, &cfg));
    }

    #[test]
    fn count_invariant_to_common_scaling(s in sigmas(), cfg in divider(), k in prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0])) {
        // Powers of two keep every ratio bit-identical.
        let scaled_s = MotionStats { sigma_acc: s.sigma_acc * k, sigma_gyr: s.sigma_gyr * k };
        let scaled_cfg = DividerConfig { sigma_acc_max: cfg.sigma_acc_max * k, sigma_gyr_max: cfg.sigma_gyr_max * k, ..cfg };
        prop_assert_eq!(subframe_count(&scaled_s, &scaled_cfg), subframe_count(&s, &cfg));
    }

    #[test]
    fn count_matches_closed_form(s in sigmas(), cfg in divider()) {
        let r = (s.sigma_acc.max() / cfg.sigma_acc_max).max(s.sigma_gyr.max() / cfg.sigma_gyr_max);
        let expected = ((cfg.n_max as f64 * r).ceil() as usize).clamp(1, cfg.n_max);
        prop_assert_eq!(subframe_count(&s, &cfg), expected);
    }

    #[test]
    fn sigma_matches_running_oracle(imu in imu_stream()) {
        let got = compute_motion_stats(&imu).unwrap();
        let acc = welford_sigma(imu.iter().map(|s| s.accel));
        let gyr = welford_sigma(imu.iter().map(|s| s.gyro));
        prop_assert!((got.sigma_acc - acc).amax() < 1e-9);
        prop_assert!((got.sigma_gyr - gyr).amax() < 1e-9);
    }

    #[test]
    fn sigma_ignores_offsets(imu in imu_stream(), shift in v3(100.0)) {
        let moved: Vec<_> = imu.iter().map(|s| ImuSample::new(s.timestamp, s.accel + shift, s.gyro - shift)).collect();
        let a = compute_motion_stats(&imu).unwrap();
        let b = compute_motion_stats(&moved).unwrap();
        prop_assert!((a.sigma_acc - b.sigma_acc).amax() < 1e-8);
        prop_assert!((a.sigma_gyr - b.sigma_gyr).amax() < 1e-8);
    }

    #[test]
    fn split_concatenates_back(scan in scan(), n in 1usize..9) {
        let frames = split_scan(&scan, n, &imu_for(&scan)).unwrap();
        prop_assert_eq!(frames.len(), n);
        let joined: Vec<_> = frames.iter().flat_map(|f| f.points.iter().copied()).collect();
        prop_assert_eq!(&joined, &scan.points);
        prop_assert_eq!(frames[0].t_start, scan.t_start);
        prop_assert_eq!(frames[n - 1].t_end, scan.t_end);
        let width = (scan.t_end - scan.t_start) / n as f64;
        for (j, f) in frames.iter().enumerate() {
            prop_assert!((f.t_end - f.t_start - width).abs() < 1e-12);
            if j + 1 < n {
                prop_assert_eq!(f.t_end, frames[j + 1].t_start);
            }
            for p in &f.points {
                prop_assert!(p.t >= f.t_start - 1e-9 && p.t <= f.t_end + 1e-9);
            }
            let w = &f.imu_window;
            prop_assert!(w.first().unwrap().timestamp <= f.t_start);
            prop_assert!(w.last().unwrap().timestamp >= f.t_end);
        }
    }

    #[test]
    fn preprocess_keeps_first_point_per_voxel(
        pts in prop::collection::vec(v3(10.0), 0..600),
        skip in 1usize..6,
        voxel in prop::sample::select(vec![0.0, 0.25, 0.5, 1.0, 3.0]),
    ) {
        let points: Vec<_> = pts.iter().enumerate().map(|(i, p)| TimedPoint::new(i as f64, *p)).collect();
        let cfg = PreprocessConfig { point_skip: skip, voxel_size: voxel };
        let out = preprocess(&points, &cfg);
        // Recount with an ordered map of voxel -> first sample index.
        let sampled: Vec<_> = points.iter().enumerate().filter(|(i, _)| i % skip == 0).map(|(_, p)| *p).collect();
        if voxel == 0.0 {
            prop_assert_eq!(out, sampled);
        } else {
            let mut first: BTreeMap<(i64, i64, i64), usize> = BTreeMap::new();
            for (i, p) in sampled.iter().enumerate() {
                let k = (p.p / voxel).map(|c| c.floor() as i64);
                first.entry((k.x, k.y, k.z)).or_insert(i);
            }
            let mut idx: Vec<_> = first.values().copied().collect();
            idx.sort_unstable();
            let expected: Vec<_> = idx.iter().map(|&i| sampled[i]).collect();
            prop_assert_eq!(out, expected);
        }
    }

    #[test]
    fn preprocess_output_occupies_distinct_voxels(pts in prop::collection::vec(v3(5.0), 1..600)) {
        let points: Vec<_> = pts.iter().map(|p| TimedPoint::new(0.0, *p)).collect();
        let out = preprocess(&points, &PreprocessConfig { point_skip: 1, voxel_size: 0.5 });
        let mut seen = HashMap::new();
        for p in &out {
            let k = (p.p * 2.0).map(|c| c.floor() as i64);
            prop_assert!(seen.insert((k.x, k.y, k.z), ()).is_none());
        }
        prop_assert!(!out.is_empty());
    }
}

#[test]
fn zero_subframes_rejected() {
    let scan = Scan {
        t_start: 0.0,
        t_end: 0.1,
        points: vec![TimedPoint::new(0.05, Vector3::x())],
    };
    assert!(split_scan(&scan, 0, &imu_for(&scan)).is_err());
}
