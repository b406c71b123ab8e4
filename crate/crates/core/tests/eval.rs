mod common;

use dfvio::eval::{
    align_sim3, alignment_residual, associate, format_tum, parse_tum, relative_translation_error, rmse,
    AlignmentResult, StampedPose,
};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::Rng;
use std::path::Path;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rmse_absorbs_a_similarity_transform(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (gt, est) = trajectory_pair(&mut r, 300);
        let (gt, est) = (to_poses(&gt), to_poses(&est));
        let base = rmse(&est, &gt, 1e9, 0.02).unwrap();
        let scale = r.random_range(0.2..5.0);
        let rot = random_rotation(&mut r);
        let t = Vector3::new(r.random_range(-9.0..9.0), r.random_range(-9.0..9.0), r.random_range(-9.0..9.0));
        let moved: Vec<StampedPose> = est
            .iter()
            .map(|p| StampedPose { position: rot * p.position * scale + t, ..*p })
            .collect();
        let again = rmse(&moved, &gt, 1e9, 0.02).unwrap();
        prop_assert!((again.rmse - base.rmse).abs() <= 1e-9, "{} vs {}", again.rmse, base.rmse);
    }

    #[test]
    fn relative_error_ignores_a_shared_rigid_motion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (gt, est) = trajectory_pair(&mut r, 300);
        let yaw = r.random_range(-3.0..3.0);
        let t = Vector3::new(r.random_range(-9.0..9.0), r.random_range(-9.0..9.0), r.random_range(-1.0..1.0));
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let moved = |p: &[StampedPose]| -> Vec<StampedPose> {
            p.iter()
                .map(|s| StampedPose { position: q * s.position + t, orientation: q * s.orientation, ..*s })
                .collect()
        };
        let lengths = [0.5, 1.0, 2.0];
        let (gt, est) = (to_poses(&gt), to_poses(&est));
        let a = relative_translation_error(&est, &gt, &lengths, 0.02).unwrap();
        let b = relative_translation_error(&moved(&est), &moved(&gt), &lengths, 0.02).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.samples, y.samples);
            match (x.mean_pct, y.mean_pct) {
                (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-9),
                (u, v) => prop_assert_eq!(u, v),
            }
        }
    }

    #[test]
    fn relative_error_matches_brute_force(seed in any::<u64>(), n in 20usize..200) {
        let mut r = rng(seed);
        let (gt, est) = trajectory_pair(&mut r, n);
        let lengths = [0.2, 0.7, 3.0];
        let rows = relative_translation_error(&to_poses(&est), &to_poses(&gt), &lengths, 0.02).unwrap();
        for (row, &l) in rows.iter().zip(&lengths) {
            match (row.mean_pct, rte_oracle(&gt, &est, l)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn alignment_is_a_local_minimum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let truth = random_points(&mut r, 40, 2.0);
        let est: Vec<Vector3<f64>> = truth
            .iter()
            .map(|g| Vector3::new(g.x * 0.8 + 0.3, g.y * 0.8, g.z * 0.8) + random_points(&mut r, 1, 0.2)[0])
            .collect();
        let best = align_sim3(&est, &truth).unwrap();
        let base = alignment_residual(&best, &est, &truth);
        for _ in 0..50 {
            let eps = 10f64.powi(r.random_range(-6..-1));
            let dq = UnitQuaternion::from_scaled_axis(Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * eps);
            let probe = AlignmentResult {
                scale: best.scale * (1.0 + r.random_range(-eps..eps)),
                rotation: dq.to_rotation_matrix().into_inner() * best.rotation,
                translation: best.translation + Vector3::new(r.random_range(-eps..eps), r.random_range(-eps..eps), r.random_range(-eps..eps)),
            };
            prop_assert!(alignment_residual(&probe, &est, &truth) >= base - 1e-12 * base.max(1.0));
        }
        prop_assert!(best.scale > 0.0);
        prop_assert!((best.rotation.determinant() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn reflected_points_still_align_with_a_rotation() {
    let mut r = rng(3);
    let truth = random_points(&mut r, 30, 2.0);
    let mirrored: Vec<Vector3<f64>> = truth.iter().map(|g| Vector3::new(-g.x, g.y, g.z)).collect();
    let a = align_sim3(&mirrored, &truth).unwrap();
    assert!((a.rotation.determinant() - 1.0).abs() < 1e-9);
    assert!(a.scale > 0.0);
}

#[test]
fn alignment_rejects_degenerate_input() {
    let line: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
    assert!(align_sim3(&line, &line).is_err());
    assert!(align_sim3(&line[..2], &line[..2]).is_err());
    assert!(align_sim3(&line[..4], &line[..5]).is_err());
}

#[test]
fn association_pairs_nearest_stamps_once() {
    let gt: Vec<StampedPose> = (0..10).map(|k| StampedPose::planar(k as f64 * 0.1, k as f64, 0.0, 1.0, 0.0)).collect();
    let est: Vec<StampedPose> = (0..20)
        .map(|k| StampedPose::planar(k as f64 * 0.05 + 0.004, k as f64 * 0.5, 0.0, 1.0, 0.0))
        .collect();
    let pairs = associate(&est, &gt, 0.02).unwrap();
    assert_eq!(pairs.len(), 10);
    for (k, p) in pairs.iter().enumerate() {
        assert!((p.estimate.timestamp - p.truth.timestamp - 0.004).abs() < 1e-12, "pair {k}");
    }
    let far: Vec<StampedPose> = gt.iter().map(|p| StampedPose { timestamp: p.timestamp + 5.0, ..*p }).collect();
    assert!(associate(&far, &gt, 0.02).is_err());
}

#[test]
fn tum_text_round_trip() {
    let mut r = rng(9);
    let poses = to_poses(&random_walk(&mut r, 50, 0.1));
    let back = parse_tum(&format_tum(&poses), Path::new("mem")).unwrap();
    assert_eq!(back.len(), poses.len());
    for (a, b) in poses.iter().zip(&back) {
        assert!((a.timestamp - b.timestamp).abs() < 1e-9);
        assert!((a.position - b.position).norm() < 1e-9);
        assert!(a.orientation.angle_to(&b.orientation) < 1e-9);
        assert!((b.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
    }
    let err = parse_tum("# header\n0 0 0 0 0 0 0 1\n0.1 0 0 0 nan 0 0 1\n", Path::new("t.txt")).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn identical_trajectories_score_zero() {
    let mut r = rng(12);
    let poses = to_poses(&random_walk(&mut r, 400, 0.05));
    let rep = rmse(&poses, &poses, 10.0, 0.02).unwrap();
    assert!(rep.rmse < 1e-9 && (rep.alignment.scale - 1.0).abs() < 1e-9);
    let pairs = pose_pairs(&poses, &poses);
    assert!(dfvio::pipeline::final_position_error(&pairs) < 1e-9);
    let rows = relative_translation_error(&poses, &poses, &[0.5, 1e6], 0.02).unwrap();
    assert!(rows[0].mean_pct.unwrap() < 1e-9);
    assert_eq!(rows[1].mean_pct, None);
    assert!(relative_translation_error(&poses, &poses, &[-1.0], 0.02).is_err());
}
