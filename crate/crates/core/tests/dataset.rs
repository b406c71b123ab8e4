use std::fs;
use std::path::Path;

use dfvio::config::PipelineConfig;
use dfvio::dataset::{load_sequence, synth_generate, write_sequence, SuperPointSource, SynthConfig};
use dfvio::error::Error;
use dfvio::fusion::{rot2, GRAVITY};
use dfvio::pipeline::run_sequence;
use nalgebra::Vector2;

fn three_frames(dir: &Path) -> dfvio::dataset::Sequence {
    let mut cfg = SynthConfig::square(4);
    cfg.duration = 2.0 / cfg.frame_rate;
    let seq = synth_generate(&cfg).unwrap();
    assert_eq!(seq.frames.len(), 3);
    write_sequence(&seq, dir).unwrap();
    seq
}

fn rewrite(path: &Path, f: impl FnOnce(Vec<String>) -> Vec<String>) {
    let lines = fs::read_to_string(path).unwrap().lines().map(String::from).collect();
    fs::write(path, f(lines).join("\n") + "\n").unwrap();
}

#[test]
fn written_sequences_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let seq = three_frames(dir.path());
    let back = load_sequence(dir.path()).unwrap();
    assert_eq!(back.frames, seq.frames);
    assert_eq!(back.imu, seq.imu);
    assert_eq!(back.tof, seq.tof);
    assert_eq!(back.intrinsics, seq.intrinsics);
    assert!((back.extrinsics.cam_from_imu - seq.extrinsics.cam_from_imu).amax() < 1e-12);
    assert_eq!(back.ground_truth.len(), seq.ground_truth.len());
    for (a, b) in back.ground_truth.iter().zip(&seq.ground_truth) {
        assert!((a.position - b.position).norm() < 1e-9 && (a.timestamp - b.timestamp).abs() < 1e-9);
    }
    assert_eq!(back.superpoint, SuperPointSource::None);
}

#[test]
fn repeated_imu_timestamp_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    three_frames(dir.path());
    let imu = dir.path().join("imu.csv");
    rewrite(&imu, |mut lines| {
        lines[3] = lines[2].clone();
        lines
    });
    match load_sequence(dir.path()) {
        Err(Error::NonMonotoneTimestamp { path, line, .. }) => {
            assert_eq!(path, imu);
            assert_eq!(line, 4);
        }
        other => panic!("expected a timestamp error, got {other:?}"),
    }
}

#[test]
fn broken_inputs_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    three_frames(dir.path());
    let frames = dir.path().join("frames.csv");
    let original = fs::read_to_string(&frames).unwrap();

    rewrite(&frames, |mut lines| {
        lines[2] = "1,abc".into();
        lines
    });
    let err = load_sequence(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Malformed { line: 3, .. }), "{err}");

    fs::write(&frames, &original).unwrap();
    fs::remove_file(dir.path().join("frames/0000000001.pgm")).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::MissingInput(_))));

    fs::remove_file(dir.path().join("calib.cfg")).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::MissingInput(_))));
    assert!(matches!(load_sequence(&dir.path().join("nope")), Err(Error::MissingInput(_))));
}

#[test]
fn jittery_imu_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    three_frames(dir.path());
    rewrite(&dir.path().join("imu.csv"), |mut lines| {
        let mut f: Vec<String> = lines[5].split(',').map(String::from).collect();
        let t: f64 = f[0].parse().unwrap();
        f[0] = (t + 0.0002).to_string();
        lines[5] = f.join(",");
        lines
    });
    assert!(matches!(load_sequence(dir.path()), Err(Error::Malformed { .. })));
}

#[test]
fn missing_ground_truth_leaves_metrics_empty() {
    let dir = tempfile::tempdir().unwrap();
    three_frames(dir.path());
    fs::remove_file(dir.path().join("groundtruth.txt")).unwrap();
    let seq = load_sequence(dir.path()).unwrap();
    assert!(seq.ground_truth.is_empty());
    let out = run_sequence(&seq, &PipelineConfig::default()).unwrap();
    assert_eq!(out.estimate.len(), 3);
    assert!(out.metrics.is_none() && out.metrics_error.is_none());
}

#[test]
fn generation_is_deterministic() {
    let mut cfg = SynthConfig::square(11);
    cfg.duration = 0.3;
    cfg.imu_noise.accel_std = 0.05;
    cfg.imu_noise.gyro_std = 0.01;
    cfg.tof_noise_std = 0.003;
    let a = synth_generate(&cfg).unwrap();
    let b = synth_generate(&cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 12;
    let c = synth_generate(&cfg).unwrap();
    assert_ne!(a.imu, c.imu);
    assert_eq!(a.ground_truth, c.ground_truth);
}

/// Trapezoidal strapdown integration of the noiseless stream over ten seconds
/// of the square, including a corner turn.
#[test]
fn noiseless_imu_integrates_to_the_trajectory() {
    let mut cfg = SynthConfig::square(1);
    cfg.frame_rate = 1.0;
    cfg.imu_rate = 4000.0;
    cfg.duration = 10.0;
    let seq = synth_generate(&cfg).unwrap();
    let traj = &cfg.trajectory;
    let start = traj.pose(0.0);
    let v0 = traj.velocity(0.0);
    let mut psi = start.psi;
    let mut pos = Vector2::new(start.x, start.y);
    let mut vel = Vector2::new(v0.x, v0.y);
    let mut z = (start.z, v0.z);
    let world = |s: &dfvio::fusion::ImuSample, psi: f64| {
        (rot2(psi) * Vector2::new(s.accel.x, s.accel.y), -(s.accel.z + GRAVITY))
    };
    for w in seq.imu.windows(2) {
        let dt = w[1].timestamp - w[0].timestamp;
        let psi1 = psi + 0.5 * (w[0].gyro.z + w[1].gyro.z) * dt;
        let (a0, az0) = world(&w[0], psi);
        let (a1, az1) = world(&w[1], psi1);
        let v1 = vel + 0.5 * (a0 + a1) * dt;
        pos += 0.5 * (vel + v1) * dt + (a0 - a1) * dt * dt / 12.0;
        vel = v1;
        let vz1 = z.1 + 0.5 * (az0 + az1) * dt;
        z = (z.0 + 0.5 * (z.1 + vz1) * dt + (az0 - az1) * dt * dt / 12.0, vz1);
        psi = psi1;
    }
    let end = traj.pose(seq.imu.last().unwrap().timestamp);
    let err = (pos - Vector2::new(end.x, end.y)).norm();
    assert!(err < 1e-6, "position drift {err} m");
    assert!((z.0 - end.z).abs() < 1e-6);
    assert!(dfvio::fusion::wrap_angle(psi - end.psi).abs() < 1e-9);
}
