//! Offline replay of a sequence through tracker, motion estimation and fusion.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;

use crate::config::{Mode, PipelineConfig, TrackerKind};
use crate::dataset::{load_sequence, Sequence, TofSample};
use crate::error::{Error, Result};
use crate::eval::{self, PosePair, RelativeError, RmseReport, StampedPose};
use crate::fusion::{
    ekf_predict, ekf_update_flow, ekf_update_height, pixel_to_metric, reference_pipeline_step, to_camera_frame,
    FlowMeasurement, ImuSample, NavState, UpdateOutcome,
};
use crate::imgproc::Image8;
use crate::orb::OrbTracker;
use crate::px4flow::{FlowTracker, FlowVector};
use crate::rigid::{estimate_motion_detailed, TrackedMatch};
use crate::superpoint::SuperPointTracker;

pub const STAGES: [&str; 4] = ["predict", "track", "motion", "update"];

/// Wall time per pipeline stage for one frame, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameTiming {
    pub index: usize,
    pub stages: [f64; 4],
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub frames: usize,
    pub valid_motions: usize,
    pub applied_updates: usize,
    pub rejected_updates: usize,
    pub height_updates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub rmse: RmseReport,
    pub relative: Vec<RelativeError>,
    /// Drift at the last associated pose with the estimate anchored at the
    /// first ground-truth pose.
    pub final_position_error_m: f64,
    pub path_length_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub estimate: Vec<StampedPose>,
    pub timing: Vec<FrameTiming>,
    pub stats: RunStats,
    pub metrics: Option<Metrics>,
    /// Why metrics are missing although ground truth exists (e.g. a
    /// stationary sequence cannot be aligned).
    pub metrics_error: Option<String>,
}

enum Tracker {
    Orb(OrbTracker),
    Flow(FlowTracker),
    SuperPoint(SuperPointTracker),
}

/// Tracker output for one frame.
struct Tracked {
    matches: Vec<TrackedMatch>,
    flows: Vec<FlowVector>,
}

impl Tracker {
    fn new(cfg: &PipelineConfig) -> Result<Self> {
        Ok(match cfg.tracker {
            TrackerKind::Orb => Tracker::Orb(OrbTracker::new(cfg.orb)?),
            TrackerKind::Px4flow => Tracker::Flow(FlowTracker::new(cfg.flow)),
            TrackerKind::Superpoint => Tracker::SuperPoint(SuperPointTracker::new(cfg.superpoint)),
        })
    }

    fn track(&mut self, seq: &Sequence, k: usize, img: &Image8) -> Result<Tracked> {
        Ok(match self {
            Tracker::Orb(t) => Tracked {
                matches: t.track(img)?,
                flows: Vec::new(),
            },
            Tracker::Flow(t) => {
                let flows = t.flows(img)?;
                Tracked {
                    matches: flows.iter().filter(|f| f.valid).map(FlowVector::to_match).collect(),
                    flows,
                }
            }
            Tracker::SuperPoint(t) => {
                let out = seq.superpoint_output(k)?;
                out.expect_frame(img.width(), img.height())?;
                Tracked {
                    matches: t.track(&out),
                    flows: Vec::new(),
                }
            }
        })
    }
}

/// IMU-driven propagation of the filter clock.
struct ImuCursor {
    samples: Vec<ImuSample>,
    next: usize,
    last: Option<ImuSample>,
    time: f64,
}

impl ImuCursor {
    fn new(seq: &Sequence, start: f64) -> Self {
        let samples = seq.imu.iter().map(|s| to_camera_frame(s, &seq.extrinsics)).collect();
        Self {
            samples,
            next: 0,
            last: None,
            time: start,
        }
    }

    /// Visit every IMU interval up to `t` with the sample to integrate and
    /// its duration, holding the latest reading past the last sample.
    fn advance(&mut self, t: f64, mut f: impl FnMut(&ImuSample, f64) -> Result<()>) -> Result<()> {
        const MIN_STEP: f64 = 1e-9;
        while self.next < self.samples.len() && self.samples[self.next].timestamp <= t {
            let s = self.samples[self.next];
            self.next += 1;
            let dt = s.timestamp - self.time;
            if dt > MIN_STEP {
                let held = self.last.unwrap_or(s);
                let mid = ImuSample {
                    timestamp: s.timestamp,
                    accel: (held.accel + s.accel) * 0.5,
                    gyro: (held.gyro + s.gyro) * 0.5,
                };
                f(&mid, dt)?;
                self.time = s.timestamp;
            }
            self.last = Some(s);
        }
        let dt = t - self.time;
        if dt > MIN_STEP {
            if let Some(held) = self.last {
                f(&held, dt)?;
            }
            self.time = t;
        }
        Ok(())
    }
}

fn initial_height(tof: &[TofSample], t0: f64, fallback: f64) -> f64 {
    tof.iter()
        .take_while(|s| s.timestamp <= t0 + 1e-9)
        .last()
        .map(|s| s.range)
        .filter(|r| *r > 0.0 && *r <= crate::fusion::TOF_MAX_RANGE)
        .unwrap_or(fallback)
}

/// Run the configured pipeline over an in-memory sequence.
pub fn run_sequence(seq: &Sequence, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if seq.frames.is_empty() {
        return Err(Error::MissingInput("sequence has no frames".into()));
    }
    if cfg.tracker == TrackerKind::Superpoint && !seq.has_superpoint() {
        return Err(Error::MissingInput(
            "superpoint tracker needs network tensors in the sequence's spout/ directory".into(),
        ));
    }
    let intr = seq.intrinsics;
    let mut tracker = Tracker::new(cfg)?;
    let t0 = seq.frames[0].timestamp;
    let z0 = initial_height(&seq.tof, t0, cfg.initial_height_m);

    let mut state = NavState::at_rest(z0, 0.0);
    let mut imu = ImuCursor::new(seq, t0);
    let mut tof_next = seq.tof.partition_point(|s| s.timestamp <= t0 + 1e-9);
    let mut latest_range = z0;
    // reference mode dead-reckons its own pose
    let (mut rx, mut ry, mut rpsi) = (0.0, 0.0, 0.0);
    let mut prev_time = t0;

    let mut estimate = Vec::with_capacity(seq.frames.len());
    let mut timing = Vec::with_capacity(seq.frames.len());
    let mut stats = RunStats::default();

    for (k, frame) in seq.frames.iter().enumerate() {
        let t = frame.timestamp;
        let started = Instant::now();
        let mut marks = [started; 5];

        // predict, with ToF updates interleaved in time order
        let mut gyro_sum = Vector3::zeros();
        let mut gyro_time = 0.0;
        let noise = cfg.noise;
        let mut integrate = |s: &ImuSample, dt: f64, state: &mut NavState| -> Result<()> {
            gyro_sum += s.gyro * dt;
            gyro_time += dt;
            *state = ekf_predict(state, s, dt, &noise)?;
            Ok(())
        };
        while tof_next < seq.tof.len() && seq.tof[tof_next].timestamp <= t {
            let reading = seq.tof[tof_next];
            tof_next += 1;
            imu.advance(reading.timestamp, |s, dt| integrate(s, dt, &mut state))?;
            let (next, outcome) = ekf_update_height(&state, reading.range, &noise);
            state = next;
            if outcome == UpdateOutcome::Applied {
                stats.height_updates += 1;
                latest_range = reading.range;
            }
        }
        imu.advance(t, |s, dt| integrate(s, dt, &mut state))?;
        marks[1] = Instant::now();

        let tracked = tracker.track(seq, k, &frame.image)?;
        marks[2] = Instant::now();

        let dt = cfg.frame_rate_hz.map_or(t - prev_time, |r| 1.0 / r);
        let mut pending = None;
        if k > 0 && dt > 0.0 {
            match cfg.mode {
                Mode::Template => {
                    let motion = estimate_motion_detailed(&tracked.matches, &cfg.motion).motion;
                    if motion.valid {
                        stats.valid_motions += 1;
                        let metric = pixel_to_metric(&motion.camera_motion(), state.z, &intr, dt)?;
                        pending = Some(FlowMeasurement {
                            motion: metric,
                            dt,
                            valid: true,
                        });
                    }
                }
                Mode::Reference => {
                    let gyro = if gyro_time > 0.0 { gyro_sum / gyro_time } else { Vector3::zeros() };
                    let inc = reference_pipeline_step(&tracked.flows, &gyro, dt, latest_range, &intr)?;
                    if tracked.flows.iter().any(|f| f.valid) {
                        stats.valid_motions += 1;
                    }
                    (rx, ry, _) = inc.apply(rx, ry, rpsi + 0.5 * inc.dpsi);
                    rpsi = crate::fusion::wrap_angle(rpsi + inc.dpsi);
                }
            }
        }
        marks[3] = Instant::now();

        if let Some(meas) = pending {
            let (next, outcome) = ekf_update_flow(&state, &meas, &cfg.noise);
            state = next;
            match outcome {
                UpdateOutcome::Applied => stats.applied_updates += 1,
                UpdateOutcome::Rejected(_) => stats.rejected_updates += 1,
                _ => {}
            }
        }
        state = state.anchor_yaw();
        prev_time = t;
        estimate.push(match cfg.mode {
            Mode::Template => StampedPose::planar(t, state.x, state.y, state.z, state.psi),
            Mode::Reference => StampedPose::planar(t, rx, ry, latest_range, rpsi),
        });
        marks[4] = Instant::now();

        let mut stages = [0.0; 4];
        for (s, w) in stages.iter_mut().zip(marks.windows(2)) {
            *s = (w[1] - w[0]).as_secs_f64();
        }
        timing.push(FrameTiming {
            index: frame.index,
            stages,
            total: (marks[4] - started).as_secs_f64(),
        });
        stats.frames += 1;
    }

    let (metrics, metrics_error) = if seq.ground_truth.is_empty() {
        (None, None)
    } else {
        match compute_metrics(&estimate, &seq.ground_truth, cfg) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(RunOutput {
        estimate,
        timing,
        stats,
        metrics,
        metrics_error,
    })
}

/// Position drift at the final pair when the estimate is anchored at the first.
pub fn final_position_error(pairs: &[PosePair]) -> f64 {
    eval::anchored_error(pairs, 0, pairs.len() - 1)
}

pub fn compute_metrics(estimate: &[StampedPose], gt: &[StampedPose], cfg: &PipelineConfig) -> Result<Metrics> {
    let e = &cfg.eval;
    let pairs = eval::associate(estimate, gt, e.max_dt)?;
    let arc = eval::arc_lengths(&pairs);
    Ok(Metrics {
        rmse: eval::rmse(estimate, gt, e.align_window_s, e.max_dt)?,
        relative: eval::relative_translation_error(estimate, gt, &e.lengths_m, e.max_dt)?,
        final_position_error_m: final_position_error(&pairs),
        path_length_m: *arc.last().expect("non-empty association"),
    })
}

pub fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "rmse_m,{}", m.rmse.rmse);
    let _ = writeln!(out, "error_std_m,{}", m.rmse.std);
    let _ = writeln!(out, "pairs,{}", m.rmse.pairs);
    let _ = writeln!(out, "alignment_scale,{}", m.rmse.alignment.scale);
    let _ = writeln!(out, "final_position_error_m,{}", m.final_position_error_m);
    let _ = writeln!(out, "path_length_m,{}", m.path_length_m);
    for r in &m.relative {
        let v = r.mean_pct.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "rte_{}m_pct,{}", r.length_m, v);
    }
    out
}

pub fn timing_csv(rows: &[FrameTiming]) -> String {
    let mut out = format!("frame,{},total_s\n", STAGES.map(|s| format!("{s}_s")).join(","));
    for r in rows {
        let stages: Vec<String> = r.stages.iter().map(|s| format!("{s:.9}")).collect();
        let _ = writeln!(out, "{},{},{:.9}", r.index, stages.join(","), r.total);
    }
    out
}

/// Write `estimate.tum`, `timing.csv` and, with ground truth, `metrics.csv`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    eval::write_tum(&dir.join("estimate.tum"), &out.estimate)?;
    let timing = dir.join("timing.csv");
    std::fs::write(&timing, timing_csv(&out.timing)).map_err(|e| Error::io(&timing, e))?;
    if let Some(m) = &out.metrics {
        let path = dir.join("metrics.csv");
        std::fs::write(&path, metrics_csv(m)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Load a sequence directory, run it and write the outputs when an output
/// directory is configured.
pub fn run(sequence_path: &Path, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seq = load_sequence(sequence_path)?;
    let out = run_sequence(&seq, cfg)?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&out, dir)?;
    }
    Ok(out)
}
