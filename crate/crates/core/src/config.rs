//! Pipeline configuration: tracker and mode selection plus every module's
//! tunables, loaded from a sectioned `key = value` file.
//!
//! ```text
//! [pipeline]
//! tracker = orb            # orb | px4flow | superpoint
//! mode = template          # template | reference
//!
//! [px4flow]
//! search_radius = 8
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::fusion::NoiseParams;
use crate::orb::OrbConfig;
use crate::px4flow::FlowConfig;
use crate::rigid::MotionParams;
use crate::superpoint::SpConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrackerKind {
    Orb,
    Px4flow,
    Superpoint,
}

impl FromStr for TrackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "orb" => Ok(Self::Orb),
            "px4flow" => Ok(Self::Px4flow),
            "superpoint" => Ok(Self::Superpoint),
            other => Err(Error::Config(format!(
                "unknown tracker {other:?} (expected orb, px4flow or superpoint)"
            ))),
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Orb => "orb",
            Self::Px4flow => "px4flow",
            Self::Superpoint => "superpoint",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Rigid-body decomposition fused in the EKF.
    Template,
    /// Dominant flow with gyro compensation and dead reckoning.
    Reference,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "template" => Ok(Self::Template),
            "reference" => Ok(Self::Reference),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected template or reference)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Template => "template",
            Self::Reference => "reference",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub align_window_s: f64,
    pub max_dt: f64,
    pub lengths_m: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            align_window_s: crate::eval::DEFAULT_ALIGN_WINDOW,
            max_dt: crate::eval::DEFAULT_MAX_DT,
            lengths_m: vec![1.0, 2.0, 4.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub tracker: TrackerKind,
    pub mode: Mode,
    /// Overrides the frame rate derived from the sequence timestamps.
    pub frame_rate_hz: Option<f64>,
    /// Height used until the first ToF reading arrives.
    pub initial_height_m: f64,
    pub orb: OrbConfig,
    pub flow: FlowConfig,
    pub superpoint: SpConfig,
    pub motion: MotionParams,
    pub noise: NoiseParams,
    pub eval: EvalConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerKind::Orb,
            mode: Mode::Template,
            frame_rate_hz: None,
            initial_height_m: 1.0,
            orb: OrbConfig::default(),
            flow: FlowConfig::default(),
            superpoint: SpConfig::default(),
            motion: MotionParams::default(),
            noise: NoiseParams::default(),
            eval: EvalConfig::default(),
            output_dir: None,
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {raw:?}")))
}

fn parse_bool(section: &str, key: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("[{section}] {key}: expected a boolean, got {raw:?}"))),
    }
}

/// `none` or empty disables an optional value.
fn parse_opt<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<Option<T>> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(section, key, t).map(Some)
    }
}

pub fn parse_lengths(raw: &str) -> Result<Vec<f64>> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| Error::Config(format!("invalid length {s:?}")))
        })
        .collect()
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_with_origin(&text, path)
    }

    pub fn from_str_with_origin(text: &str, origin: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::malformed(origin, e.line, e.msg.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("pipeline");
            for (key, raw) in props.iter() {
                cfg.set(section, key, raw)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `key = value` from `[section]`.
    pub fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<()> {
        let s = section;
        match (section, key) {
            ("pipeline", "tracker") => self.tracker = raw.parse()?,
            ("pipeline", "mode") => self.mode = raw.parse()?,
            ("pipeline", "frame_rate_hz") => self.frame_rate_hz = parse_opt(s, key, raw)?,
            ("pipeline", "initial_height_m") => self.initial_height_m = parse(s, key, raw)?,
            ("pipeline", "output_dir") => self.output_dir = Some(PathBuf::from(raw.trim())),

            ("orb", "fast_threshold") => self.orb.thresholds.fast_threshold = parse(s, key, raw)?,
            ("orb", "harris_threshold") => self.orb.thresholds.harris_threshold = parse(s, key, raw)?,
            ("orb", "target_min") => self.orb.thresholds.target_min = parse(s, key, raw)?,
            ("orb", "target_max") => self.orb.thresholds.target_max = parse(s, key, raw)?,
            ("orb", "hard_cap") => self.orb.thresholds.hard_cap = parse(s, key, raw)?,
            ("orb", "fast_min") => self.orb.thresholds.fast_bounds.0 = parse(s, key, raw)?,
            ("orb", "fast_max") => self.orb.thresholds.fast_bounds.1 = parse(s, key, raw)?,
            ("orb", "fast_step") => self.orb.thresholds.fast_step = parse(s, key, raw)?,
            ("orb", "harris_min") => self.orb.thresholds.harris_bounds.0 = parse(s, key, raw)?,
            ("orb", "harris_max") => self.orb.thresholds.harris_bounds.1 = parse(s, key, raw)?,
            ("orb", "harris_factor") => self.orb.thresholds.harris_factor = parse(s, key, raw)?,
            ("orb", "max_hamming") => self.orb.max_hamming = parse(s, key, raw)?,
            ("orb", "max_displacement") => self.orb.max_displacement = parse_opt(s, key, raw)?,

            ("px4flow", "grid_cols") => self.flow.grid_cols = parse(s, key, raw)?,
            ("px4flow", "grid_rows") => self.flow.grid_rows = parse(s, key, raw)?,
            ("px4flow", "patch_size") => self.flow.patch_size = parse(s, key, raw)?,
            ("px4flow", "search_radius") => self.flow.search_radius = parse(s, key, raw)?,
            ("px4flow", "halfpixel") => self.flow.enable_halfpixel = parse_bool(s, key, raw)?,
            ("px4flow", "min_sad_margin") => self.flow.min_sad_margin = parse_opt(s, key, raw)?,

            ("superpoint", "score_threshold") => self.superpoint.score_threshold = parse(s, key, raw)?,
            ("superpoint", "nms_radius") => self.superpoint.nms_radius = parse(s, key, raw)?,
            ("superpoint", "max_keypoints") => self.superpoint.max_keypoints = parse(s, key, raw)?,
            ("superpoint", "min_similarity") => self.superpoint.min_similarity = parse(s, key, raw)?,

            ("rigid", "prefilter_band_px") => self.motion.prefilter_band_px = parse(s, key, raw)?,
            ("rigid", "reprojection_gate_px") => self.motion.reprojection_gate_px = parse(s, key, raw)?,
            ("rigid", "min_inliers") => self.motion.min_inliers = parse(s, key, raw)?,

            ("noise", "accel") => self.noise.accel = parse(s, key, raw)?,
            ("noise", "gyro") => self.noise.gyro = parse(s, key, raw)?,
            ("noise", "height_walk") => self.noise.height_walk = parse(s, key, raw)?,
            ("noise", "flow_velocity") => self.noise.flow_velocity = parse(s, key, raw)?,
            ("noise", "yaw_rate") => self.noise.yaw_rate = parse(s, key, raw)?,
            ("noise", "tof_relative") => self.noise.tof_relative = parse(s, key, raw)?,
            ("noise", "gate_sigma") => self.noise.gate_sigma = parse(s, key, raw)?,

            ("evaluation", "align_window_s") => self.eval.align_window_s = parse(s, key, raw)?,
            ("evaluation", "max_dt") => self.eval.max_dt = parse(s, key, raw)?,
            ("evaluation", "lengths") => self.eval.lengths_m = parse_lengths(raw)?,

            _ => return Err(Error::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Reference && self.tracker != TrackerKind::Px4flow {
            return Err(Error::Config(format!(
                "reference mode requires the px4flow tracker, got {}",
                self.tracker
            )));
        }
        if let Some(r) = self.frame_rate_hz {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("frame_rate_hz must be positive, got {r}")));
            }
        }
        if !(self.initial_height_m > 0.0) {
            return Err(Error::Config("initial_height_m must be positive".into()));
        }
        self.orb.thresholds.validate()?;
        self.noise.validate()?;
        let m = &self.motion;
        if !(m.prefilter_band_px > 0.0 && m.reprojection_gate_px > 0.0) || m.min_inliers < 2 {
            return Err(Error::Config("rigid: bands must be positive and min_inliers at least 2".into()));
        }
        let sp = &self.superpoint;
        if !(sp.nms_radius >= 0.0) || !(-1.0..=1.0).contains(&sp.min_similarity) {
            return Err(Error::Config("superpoint: nms_radius >= 0 and min_similarity in [-1, 1]".into()));
        }
        if !(self.eval.align_window_s > 0.0 && self.eval.max_dt >= 0.0) {
            return Err(Error::Config("evaluation: align_window_s must be positive".into()));
        }
        Ok(())
    }
}
