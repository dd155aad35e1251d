mod common;

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::Rng;

use rcvox_lio::state::{block, so3_exp, so3_log, ErrorState, NominalState, STATE_DIM};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn state() -> impl Strategy<Value = NominalState> {
    (
        vec3(50.0),
        vec3(5.0),
        vec3(3.0),
        vec3(0.2),
        vec3(0.05),
        vec3(10.0),
    )
        .prop_map(|(p, v, phi, ba, bg, g)| NominalState {
            position: p,
            velocity: v,
            attitude: UnitQuaternion::from_scaled_axis(phi),
            accel_bias: ba,
            gyro_bias: bg,
            gravity: g,
        })
}

/// Rotation vectors with `|φ| < π − 1e-3`.
fn rotvec() -> impl Strategy<Value = Vector3<f64>> {
    (vec3(1.0), 0.0..(PI - 1e-3)).prop_filter_map("non-zero axis", |(axis, angle)| {
        (axis.norm() > 1e-3).then(|| axis.normalize() * angle)
    })
}

fn error_state() -> impl Strategy<Value = ErrorState> {
    (prop::collection::vec(-10.0f64..10.0, STATE_DIM), rotvec()).prop_map(|(v, phi)| {
        let mut dx = ErrorState::from_column_slice(&v);
        dx.fixed_rows_mut::<3>(block::ROT).copy_from(&phi);
        dx
    })
}

fn max_state_diff(a: &NominalState, b: &NominalState) -> f64 {
    let d = a.boxminus(b);
    d.amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn boxminus_inverts_boxplus(x in state(), dx in error_state()) {
        let y = x.boxplus(&dx).unwrap();
        let back = y.boxminus(&x);
        prop_assert!((back - dx).amax() < 1e-10, "{}", (back - dx).amax());
    }

    #[test]
    fn boxplus_inverts_boxminus(x0 in state(), x1 in state()) {
        let d = x1.boxminus(&x0);
        prop_assume!(d.fixed_rows::<3>(block::ROT).norm() < PI - 1e-3);
        let y = x0.boxplus(&d).unwrap();
        prop_assert!((y.position - x1.position).amax() < 1e-10);
        prop_assert!((y.velocity - x1.velocity).amax() < 1e-10);
        prop_assert!((y.gravity - x1.gravity).amax() < 1e-10);
        prop_assert!((y.accel_bias - x1.accel_bias).amax() < 1e-10);
        prop_assert!((y.gyro_bias - x1.gyro_bias).amax() < 1e-10);
        prop_assert!(y.attitude.angle_to(&x1.attitude) < 1e-10);
        prop_assert!(max_state_diff(&y, &x1) < 1e-10);
    }

    #[test]
    fn log_inverts_exp(phi in rotvec()) {
        let back = so3_log(&so3_exp(&phi));
        prop_assert!((back - phi).amax() < 1e-9, "{phi} -> {back}");
    }

    #[test]
    fn exp_inverts_log(phi in vec3(10.0)) {
        let q = UnitQuaternion::from_scaled_axis(phi);
        prop_assert!(so3_exp(&so3_log(&q)).angle_to(&q) < 1e-9);
    }

    #[test]
    fn self_difference_is_zero(x in state()) {
        prop_assert!(x.boxminus(&x).amax() < 1e-15);
        let y = x.boxplus(&ErrorState::zeros()).unwrap();
        prop_assert!(max_state_diff(&y, &x) < 1e-15);
        prop_assert_eq!(y.position, x.position);
    }
}

#[test]
fn attitude_norm_survives_long_boxplus_chains() {
    let mut rng = common::rng(11);
    let mut x = NominalState::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let mut dx = ErrorState::zeros();
        dx.fixed_rows_mut::<3>(block::ROT)
            .copy_from(&common::uniform3(&mut rng, -1.0, 1.0));
        x = x.boxplus(&dx).unwrap();
        worst = worst.max((x.attitude.quaternion().norm() - 1.0).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn error_state_layout_table() {
    let mut covered = [false; STATE_DIM];
    for (name, offset) in block::ALL {
        for i in offset..offset + 3 {
            assert!(!covered[i], "{name} overlaps");
            covered[i] = true;
        }
    }
    assert!(covered.iter().all(|c| *c));
    let names: Vec<_> = block::ALL.iter().map(|b| b.0).collect();
    assert_eq!(
        names,
        [
            "position",
            "velocity",
            "attitude",
            "accel_bias",
            "gyro_bias",
            "gravity"
        ]
    );
    // Each block of an error state moves exactly the matching component.
    let x = NominalState::default();
    for (name, offset) in block::ALL {
        let mut dx = ErrorState::zeros();
        dx[offset] = 0.25;
        let y = x.boxplus(&dx).unwrap();
        let moved = [
            y.position != x.position,
            y.velocity != x.velocity,
            y.attitude != x.attitude,
            y.accel_bias != x.accel_bias,
            y.gyro_bias != x.gyro_bias,
            y.gravity != x.gravity,
        ];
        assert_eq!(moved.iter().filter(|m| **m).count(), 1, "{name}");
        assert!(moved[offset / 3], "{name}");
    }
}

#[test]
fn non_finite_perturbation_is_an_error() {
    let mut rng = common::rng(3);
    let x = common::random_state(&mut rng);
    for i in [0, 7, 17] {
        let mut dx = ErrorState::zeros();
        dx[i] = if rng.random_bool(0.5) {
            f64::NAN
        } else {
            f64::INFINITY
        };
        assert!(x.boxplus(&dx).is_err());
    }
}
