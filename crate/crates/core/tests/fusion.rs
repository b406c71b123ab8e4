mod common;

use std::f64::consts::PI;

use dfvio::fusion::{
    ekf_predict, ekf_update_flow, ekf_update_height, pixel_to_metric, wrap_angle, CameraIntrinsics, FlowMeasurement,
    ImuSample, MetricMotion, NavState, NoiseParams, UpdateOutcome, IPSI, IZ, TOF_MAX_RANGE,
};
use dfvio::RigidMotion2D;
use nalgebra::{Matrix6, Vector3, Vector6};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn random_state(r: &mut impl Rng) -> NavState {
    let mut s = NavState::at_rest(r.random_range(0.3..3.0), r.random_range(-PI..PI));
    s.x = r.random_range(-5.0..5.0);
    s.y = r.random_range(-5.0..5.0);
    s.vx = r.random_range(-1.0..1.0);
    s.vy = r.random_range(-1.0..1.0);
    let a = Matrix6::from_fn(|_, _| r.random_range(-0.1..0.1));
    s.p = a * a.transpose() + Matrix6::identity() * 1e-4;
    s.anchor_yaw()
}

fn random_imu(r: &mut impl Rng) -> ImuSample {
    ImuSample {
        timestamp: 0.0,
        accel: Vector3::new(r.random_range(-4.0..4.0), r.random_range(-4.0..4.0), 9.81),
        gyro: Vector3::new(0.0, 0.0, r.random_range(-3.0..3.0)),
    }
}

fn in_range(psi: f64) -> bool {
    psi > -PI && psi <= PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wrapped_angles_are_congruent_and_half_open(a in -1e4f64..1e4) {
        let w = wrap_angle(a);
        prop_assert!(in_range(w));
        let k = (a - w) / (2.0 * PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn covariance_stays_healthy_over_mixed_steps(seed in any::<u64>(), steps in 50usize..400) {
        let mut r = rng(seed);
        let noise = NoiseParams::default();
        let mut s = random_state(&mut r);
        for _ in 0..steps {
            let before = s.p.trace();
            let tol = 1e-12 * before.max(1.0);
            match r.random_range(0..3) {
                0 => {
                    s = ekf_predict(&s, &random_imu(&mut r), r.random_range(1e-4..0.05), &noise).unwrap();
                    prop_assert!(s.p.trace() >= before - tol);
                }
                1 => {
                    let range = s.z + r.random_range(-0.02..0.02);
                    s = ekf_update_height(&s, range, &noise).0;
                    prop_assert!(s.p.trace() <= before + tol);
                }
                _ => {
                    let dt = 0.01;
                    let meas = FlowMeasurement {
                        motion: MetricMotion {
                            vx: r.random_range(-1.0..1.0),
                            vy: r.random_range(-1.0..1.0),
                            yaw_rate: r.random_range(-3.0..3.0),
                        },
                        dt,
                        valid: true,
                    };
                    s = ekf_update_flow(&s, &meas, &noise).0;
                    prop_assert!(s.p.trace() <= before + tol);
                    s = s.anchor_yaw();
                }
            }
            prop_assert!(s.min_eigenvalue() >= -1e-9, "eigenvalue {}", s.min_eigenvalue());
            prop_assert!((s.p - s.p.transpose()).amax() <= 1e-12 * s.p.amax());
            prop_assert!(in_range(s.psi) && in_range(s.anchor.psi));
        }
    }

    #[test]
    fn predict_covariance_uses_the_mean_jacobian(seed in any::<u64>()) {
        let mut r = rng(seed);
        let noise = NoiseParams::default();
        let s = random_state(&mut r);
        let imu = random_imu(&mut r);
        let dt = r.random_range(1e-3..0.05);
        let mean_after = |x: &Vector6<f64>| {
            let mut t = s;
            t.x = x[0];
            t.y = x[1];
            t.z = x[2];
            t.psi = x[3];
            t.vx = x[4];
            t.vy = x[5];
            ekf_predict(&t, &imu, dt, &noise).unwrap().mean()
        };
        let x0 = s.mean();
        let h = 1e-6;
        let mut jac = Matrix6::zeros();
        for k in 0..6 {
            let mut up = x0;
            let mut down = x0;
            up[k] += h;
            down[k] -= h;
            let mut d = mean_after(&up) - mean_after(&down);
            d[IPSI] = wrap_angle(d[IPSI]);
            jac.set_column(k, &(d / (2.0 * h)));
        }
        let mut zero = s;
        zero.p = Matrix6::zeros();
        let q = ekf_predict(&zero, &imu, dt, &noise).unwrap().p;
        let got = ekf_predict(&s, &imu, dt, &noise).unwrap().p - q;
        let want = jac * s.p * jac.transpose();
        prop_assert!((got - want).amax() <= 1e-6 * want.amax().max(1e-3), "{}", (got - want).amax());
    }

    #[test]
    fn height_update_matches_the_scalar_filter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let noise = NoiseParams::default();
        let mut s = NavState::at_rest(r.random_range(0.5..3.0), 0.0);
        let pzz = r.random_range(1e-4..0.05);
        s.p[(IZ, IZ)] = pzz;
        let range = s.z + r.random_range(-0.01..0.01);
        let (out, outcome) = ekf_update_height(&s, range, &noise);
        prop_assert_eq!(outcome, UpdateOutcome::Applied);
        let rv = (noise.tof_relative * range).powi(2);
        let gain = pzz / (pzz + rv);
        prop_assert!((out.z - (s.z + gain * (range - s.z))).abs() <= 1e-12);
        prop_assert!((out.p[(IZ, IZ)] - pzz * rv / (pzz + rv)).abs() <= 1e-12 * pzz);
        prop_assert_eq!((out.x, out.y, out.vx, out.vy), (s.x, s.y, s.vx, s.vy));
    }

    #[test]
    fn metric_motion_scales_with_height_over_focal(du in -20.0f64..20.0, dv in -20.0f64..20.0, z in 0.1f64..4.0, f in 100.0f64..900.0) {
        let intr = CameraIntrinsics { fx: f, fy: f, cx: 80.0, cy: 60.0, width: 160, height: 120 };
        let m = RigidMotion2D { du, dv, dpsi: 0.01, inlier_count: 10, valid: true };
        let dt = 0.01;
        let v = pixel_to_metric(&m, z, &intr, dt).unwrap();
        // ground displacement under a pinhole at height z
        prop_assert!((v.vx * dt - du * z / f).abs() <= 1e-12);
        prop_assert!((v.vy * dt - dv * z / f).abs() <= 1e-12);
        prop_assert!((v.yaw_rate * dt - 0.01).abs() <= 1e-15);
    }
}

#[test]
fn rejected_and_skipped_updates_leave_the_state_alone() {
    let noise = NoiseParams::default();
    let s = NavState::at_rest(1.0, 0.3);
    for range in [0.0, -1.0, TOF_MAX_RANGE + 0.1, f64::NAN] {
        let (out, outcome) = ekf_update_height(&s, range, &noise);
        assert_eq!(outcome, UpdateOutcome::OutOfRange);
        assert_eq!(out, s);
    }
    let (out, outcome) = ekf_update_height(&s, 2.5, &noise);
    assert!(matches!(outcome, UpdateOutcome::Rejected(d2) if d2 > 25.0));
    assert_eq!(out, s);

    let meas = FlowMeasurement { motion: MetricMotion::default(), dt: 0.01, valid: false };
    assert_eq!(ekf_update_flow(&s, &meas, &noise), (s, UpdateOutcome::Skipped));
    let meas = FlowMeasurement { motion: MetricMotion { vx: f64::NAN, ..Default::default() }, dt: 0.01, valid: true };
    assert_eq!(ekf_update_flow(&s, &meas, &noise).1, UpdateOutcome::Skipped);
    let meas = FlowMeasurement { motion: MetricMotion { vx: 30.0, ..Default::default() }, dt: 0.01, valid: true };
    assert!(matches!(ekf_update_flow(&s, &meas, &noise).1, UpdateOutcome::Rejected(_)));
}

#[test]
fn predict_rejects_bad_intervals() {
    let s = NavState::at_rest(1.0, 0.0);
    let imu = ImuSample { timestamp: 0.0, accel: Vector3::zeros(), gyro: Vector3::zeros() };
    for dt in [0.0, -0.01, f64::NAN] {
        assert!(ekf_predict(&s, &imu, dt, &NoiseParams::default()).is_err());
    }
}

#[test]
fn repeated_flow_fixes_pull_velocity_to_the_measurement() {
    let noise = NoiseParams::default();
    let mut s = NavState::at_rest(1.0, 0.7);
    let imu = ImuSample { timestamp: 0.0, accel: Vector3::new(0.0, 0.0, 9.81), gyro: Vector3::zeros() };
    // camera-frame velocity (0.4, -0.2) at yaw 0.7
    let meas = FlowMeasurement { motion: MetricMotion { vx: 0.4, vy: -0.2, yaw_rate: 0.0 }, dt: 0.01, valid: true };
    for _ in 0..300 {
        s = ekf_predict(&s, &imu, 0.01, &noise).unwrap();
        s = ekf_update_flow(&s, &meas, &noise).0.anchor_yaw();
    }
    let (c, sn) = (0.7f64.cos(), 0.7f64.sin());
    let want = (c * 0.4 + sn * 0.2, sn * 0.4 - c * 0.2);
    assert!((s.vx - want.0).abs() < 0.02 && (s.vy - want.1).abs() < 0.02, "({}, {}) vs {want:?}", s.vx, s.vy);
    assert!((s.psi - 0.7).abs() < 0.01);
}
