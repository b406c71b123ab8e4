//! Tracker runtime versus trackable displacement.
//!
//! PX4FLOW block matching is timed over several search radii and should grow
//! quadratically; ORB is timed over several displacement gates and should
//! stay flat, since matching scores every pair regardless of the gate.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{synth_generate, SynthConfig, Trajectory};
use crate::error::{Error, Result};
use crate::imgproc::Image8;
use crate::orb::{OrbConfig, OrbTracker};
use crate::px4flow::{block_flow, FlowConfig};

pub const DEFAULT_RADII: [usize; 5] = [2, 4, 8, 16, 24];
pub const DEFAULT_DISPLACEMENTS: [f64; 4] = [8.0, 16.0, 32.0, 64.0];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub radii: Vec<usize>,
    pub displacements: Vec<f64>,
    /// Frames rendered for timing.
    pub frames: usize,
    /// Timing passes per setting; each frame keeps its fastest pass.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            radii: DEFAULT_RADII.to_vec(),
            displacements: DEFAULT_DISPLACEMENTS.to_vec(),
            frames: 40,
            repeats: 5,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchTracker {
    Px4flow,
    Orb,
}

impl BenchTracker {
    pub fn name(self) -> &'static str {
        match self {
            Self::Px4flow => "px4flow",
            Self::Orb => "orb",
        }
    }

    pub fn parameter(self) -> &'static str {
        match self {
            Self::Px4flow => "search_radius",
            Self::Orb => "max_displacement",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub tracker: BenchTracker,
    pub value: f64,
    /// Mean wall time per frame in seconds.
    pub frame_time: f64,
}

/// Least-squares `t = a r^2 + b r + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

/// Constant model: the mean, plus the spread as slowest over fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantFit {
    pub mean: f64,
    pub max_over_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub quadratic: Option<QuadraticFit>,
    pub constant: Option<ConstantFit>,
}

pub fn fit_quadratic(points: &[(f64, f64)]) -> Option<QuadraticFit> {
    if points.len() < 3 {
        return None;
    }
    let a = DMatrix::from_fn(points.len(), 3, |i, j| points[i].0.powi(2 - j as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coef = a.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = (&a * &coef - &y).norm_squared();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(QuadraticFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        r_squared,
    })
}

pub fn fit_constant(times: &[f64]) -> Option<ConstantFit> {
    if times.is_empty() {
        return None;
    }
    let max = times.iter().copied().fold(f64::MIN, f64::max);
    let min = times.iter().copied().fold(f64::MAX, f64::min);
    Some(ConstantFit {
        mean: times.iter().sum::<f64>() / times.len() as f64,
        max_over_min: max / min,
    })
}

fn bench_frames(cfg: &BenchConfig) -> Result<Vec<Image8>> {
    if cfg.frames < 2 || cfg.repeats == 0 {
        return Err(Error::Config("bench needs at least 2 frames and 1 repeat".into()));
    }
    let mut synth = SynthConfig::hover(cfg.seed, 1.0);
    synth.duration = (cfg.frames - 1) as f64 / synth.frame_rate;
    synth.trajectory = Trajectory::constant_velocity(0.4, 0.3, 1.0, synth.duration.max(1.0))?;
    synth.texture.seed = cfg.seed;
    Ok(synth_generate(&synth)?.frames.into_iter().map(|f| f.image).collect())
}

/// Wall time of `f` in seconds.
fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<f64> {
    let start = Instant::now();
    std::hint::black_box(f()?);
    Ok(start.elapsed().as_secs_f64())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Time every setting. Settings are interleaved frame by frame, so a slow
/// phase of the machine hits all of them alike, and each frame keeps its
/// fastest pass.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let frames = bench_frames(cfg)?;
    let flow_cfgs: Vec<FlowConfig> = cfg
        .radii
        .iter()
        .map(|&r| FlowConfig {
            search_radius: r,
            ..FlowConfig::default()
        })
        .collect();
    let mut flow_frames = vec![vec![f64::INFINITY; frames.len() - 1]; cfg.radii.len()];
    let mut orb_frames = vec![vec![f64::INFINITY; frames.len()]; cfg.displacements.len()];
    for _ in 0..cfg.repeats {
        for (k, pair) in frames.windows(2).enumerate() {
            for (fc, best) in flow_cfgs.iter().zip(flow_frames.iter_mut()) {
                best[k] = best[k].min(timed(|| block_flow(&pair[0], &pair[1], fc))?);
            }
        }
        let mut trackers = cfg
            .displacements
            .iter()
            .map(|&d| {
                OrbTracker::new(OrbConfig {
                    max_displacement: Some(d),
                    ..OrbConfig::default()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, f) in frames.iter().enumerate() {
            for (tracker, best) in trackers.iter_mut().zip(orb_frames.iter_mut()) {
                best[k] = best[k].min(timed(|| tracker.track(f))?);
            }
        }
    }
    let flow_best: Vec<f64> = flow_frames.iter().map(|v| mean(v)).collect();
    let orb_best: Vec<f64> = orb_frames.iter().map(|v| mean(v)).collect();
    let mut rows = Vec::new();
    rows.extend(cfg.radii.iter().zip(&flow_best).map(|(&r, &t)| BenchRow {
        tracker: BenchTracker::Px4flow,
        value: r as f64,
        frame_time: t,
    }));
    rows.extend(cfg.displacements.iter().zip(&orb_best).map(|(&d, &t)| BenchRow {
        tracker: BenchTracker::Orb,
        value: d,
        frame_time: t,
    }));
    let points: Vec<(f64, f64)> = cfg.radii.iter().map(|&r| r as f64).zip(flow_best).collect();
    Ok(BenchReport {
        rows,
        quadratic: fit_quadratic(&points),
        constant: fit_constant(&orb_best),
    })
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tracker,parameter,value,frame_time_s\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.9}", r.tracker.name(), r.tracker.parameter(), r.value, r.frame_time);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        if let Some(q) = self.quadratic {
            let _ = writeln!(
                out,
                "px4flow  t(r) = {:.3e} r^2 + {:.3e} r + {:.3e}   R^2 = {:.4}",
                q.a, q.b, q.c, q.r_squared
            );
        }
        if let Some(c) = self.constant {
            let _ = writeln!(out, "orb      mean {:.3e} s/frame   max/min = {:.3}", c.mean, c.max_over_min);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
