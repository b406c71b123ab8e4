//! Synthetic downfacing sequences over an infinite textured ground plane.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Frame, Sequence, SuperPointSource, TofSample};
use crate::error::{Error, Result};
use crate::eval::StampedPose;
use crate::fusion::{CameraIntrinsics, Extrinsics, ImuSample, GRAVITY};
use crate::imgproc::{gaussian_blur5, sobel3, Image8};
use crate::superpoint::{QTensor, SpOutput, CELL, DESC_DIM, HEAT_CHANNELS};

/// Multi-octave periodic value noise parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureConfig {
    pub seed: u64,
    /// Side of the periodic texel raster.
    pub size: usize,
    /// Texel edge length in meters.
    pub texel_m: f64,
    /// Lattice period of the coarsest octave, in texels; halves per octave.
    pub base_period: usize,
    pub octaves: u32,
    /// Amplitude ratio between successive octaves.
    pub persistence: f64,
    /// Standard deviation of the final gray levels.
    pub contrast: f64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            size: 2048,
            texel_m: 0.001,
            base_period: 128,
            octaves: 5,
            persistence: 0.7,
            contrast: 45.0,
        }
    }
}

impl TextureConfig {
    /// Low-detail floor: fewer octaves, weaker fine structure.
    pub fn sparse(seed: u64) -> Self {
        Self {
            seed,
            octaves: 3,
            persistence: 0.5,
            contrast: 25.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 || self.base_period >> (self.octaves - 1) < 2 {
            return Err(Error::Config("texture octaves exceed the base period".into()));
        }
        if self.size == 0 || self.size % self.base_period != 0 {
            return Err(Error::Config("texture size must be a multiple of the base period".into()));
        }
        if !(self.texel_m > 0.0 && self.contrast >= 0.0 && self.persistence > 0.0) {
            return Err(Error::Config("texture scale, contrast and persistence must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Periodic gray-level raster tiled over the ground plane.
#[derive(Clone, Debug)]
pub struct Texture {
    size: usize,
    texel_m: f64,
    values: Vec<f32>,
}

impl Texture {
    pub fn generate(cfg: &TextureConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.size;
        let mut acc = vec![0f64; n * n];
        let mut amplitude = 1.0;
        for octave in 0..cfg.octaves {
            let period = cfg.base_period >> octave;
            let cells = n / period;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(octave as u64 + 1)));
            let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            acc.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
                let cy = y / period;
                let fy = fade((y % period) as f64 / period as f64);
                let (r0, r1) = (cy * cells, ((cy + 1) % cells) * cells);
                for (x, out) in row.iter_mut().enumerate() {
                    let cx = x / period;
                    let cx1 = (cx + 1) % cells;
                    let fx = fade((x % period) as f64 / period as f64);
                    let top = lattice[r0 + cx] * (1.0 - fx) + lattice[r0 + cx1] * fx;
                    let bottom = lattice[r1 + cx] * (1.0 - fx) + lattice[r1 + cx1] * fx;
                    *out += amplitude * (top * (1.0 - fy) + bottom * fy);
                }
            });
            amplitude *= cfg.persistence;
        }
        let len = acc.len() as f64;
        let mean = acc.iter().sum::<f64>() / len;
        let std = (acc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len).sqrt().max(1e-12);
        let values = acc
            .iter()
            .map(|v| (128.0 + cfg.contrast * (v - mean) / std).clamp(0.0, 255.0) as f32)
            .collect();
        Ok(Self {
            size: n,
            texel_m: cfg.texel_m,
            values,
        })
    }

    /// Bilinear gray level at a ground point in meters.
    pub fn sample(&self, gx: f64, gy: f64) -> f64 {
        let n = self.size as f64;
        let tx = (gx / self.texel_m).rem_euclid(n);
        let ty = (gy / self.texel_m).rem_euclid(n);
        let (x0, y0) = (tx.floor(), ty.floor());
        let (fx, fy) = (tx - x0, ty - y0);
        let x0 = x0 as usize % self.size;
        let y0 = y0 as usize % self.size;
        let x1 = (x0 + 1) % self.size;
        let y1 = (y0 + 1) % self.size;
        let at = |x: usize, y: usize| self.values[y * self.size + x] as f64;
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Render the view of a camera at `pose` (height `pose.z`).
    pub fn render(&self, pose: &PlanarPose, intr: &CameraIntrinsics) -> Image8 {
        let (s, c) = pose.psi.sin_cos();
        let (w, h) = (intr.width, intr.height);
        let mut data = vec![0u8; w * h];
        data.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
            let by = (v as f64 - intr.cy) * pose.z / intr.fy;
            for (u, px) in row.iter_mut().enumerate() {
                let bx = (u as f64 - intr.cx) * pose.z / intr.fx;
                let gx = pose.x + c * bx - s * by;
                let gy = pose.y + s * bx + c * by;
                *px = self.sample(gx, gy).round().clamp(0.0, 255.0) as u8;
            }
        });
        Image8::new(w, h, data).expect("buffer sized from intrinsics")
    }
}

/// Planar pose or one of its time derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, z: f64, psi: f64) -> Self {
        Self { x, y, z, psi }
    }

    fn lerp(a: &Self, b: &Self, s: f64) -> Self {
        Self {
            x: a.x + (b.x - a.x) * s,
            y: a.y + (b.y - a.y) * s,
            z: a.z + (b.z - a.z) * s,
            psi: a.psi + (b.psi - a.psi) * s,
        }
    }

    fn delta(a: &Self, b: &Self, s: f64) -> Self {
        Self {
            x: (b.x - a.x) * s,
            y: (b.y - a.y) * s,
            z: (b.z - a.z) * s,
            psi: (b.psi - a.psi) * s,
        }
    }
}

/// Interpolation used on the segment ending at a waypoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blend {
    /// Rest-to-rest quintic `10t^3 - 15t^4 + 6t^5`.
    Quintic,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub pose: PlanarPose,
    pub blend: Blend,
}

/// Piecewise planar path through timed waypoints; held constant after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Config("trajectory needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Config("waypoint times must increase".into()));
        }
        if waypoints.iter().any(|w| !(w.pose.z > 0.0)) {
            return Err(Error::Config("trajectory height must stay positive".into()));
        }
        Ok(Self { waypoints })
    }

    /// Start at `start` at t = 0 and apply `(duration, dx, dy, dpsi)` legs
    /// with quintic blending.
    pub fn from_legs(start: PlanarPose, legs: &[(f64, f64, f64, f64)]) -> Result<Self> {
        let mut pts = vec![Waypoint {
            t: 0.0,
            pose: start,
            blend: Blend::Quintic,
        }];
        for &(dt, dx, dy, dpsi) in legs {
            let last = pts.last().expect("non-empty");
            let pose = PlanarPose::new(last.pose.x + dx, last.pose.y + dy, last.pose.z, last.pose.psi + dpsi);
            pts.push(Waypoint {
                t: last.t + dt,
                pose,
                blend: Blend::Quintic,
            });
        }
        Self::new(pts)
    }

    pub fn hover(height: f64) -> Result<Self> {
        Self::new(vec![Waypoint {
            t: 0.0,
            pose: PlanarPose::new(0.0, 0.0, height, 0.0),
            blend: Blend::Linear,
        }])
    }

    /// Straight line at constant world velocity from the origin.
    pub fn constant_velocity(vx: f64, vy: f64, height: f64, duration: f64) -> Result<Self> {
        Self::new(vec![
            Waypoint {
                t: 0.0,
                pose: PlanarPose::new(0.0, 0.0, height, 0.0),
                blend: Blend::Linear,
            },
            Waypoint {
                t: duration,
                pose: PlanarPose::new(vx * duration, vy * duration, height, 0.0),
                blend: Blend::Linear,
            },
        ])
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().expect("non-empty").t
    }

    /// Segment containing `t` and the normalized time inside it.
    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let w = &self.waypoints;
        if w.len() < 2 || t <= w[0].t || t >= w[w.len() - 1].t {
            return None;
        }
        let k = w.partition_point(|p| p.t <= t);
        let (a, b) = (&w[k - 1], &w[k]);
        Some((k, (t - a.t) / (b.t - a.t)))
    }

    pub fn pose(&self, t: f64) -> PlanarPose {
        let w = &self.waypoints;
        match self.locate(t) {
            None if t <= w[0].t => w[0].pose,
            None => w[w.len() - 1].pose,
            Some((k, tau)) => {
                let s = match w[k].blend {
                    Blend::Quintic => fade(tau),
                    Blend::Linear => tau,
                };
                PlanarPose::lerp(&w[k - 1].pose, &w[k].pose, s)
            }
        }
    }

    pub fn velocity(&self, t: f64) -> PlanarPose {
        match self.locate(t) {
            None => PlanarPose::default(),
            Some((k, tau)) => {
                let w = &self.waypoints;
                let span = w[k].t - w[k - 1].t;
                let ds = match w[k].blend {
                    Blend::Quintic => 30.0 * tau * tau * (tau - 1.0) * (tau - 1.0),
                    Blend::Linear => 1.0,
                };
                PlanarPose::delta(&w[k - 1].pose, &w[k].pose, ds / span)
            }
        }
    }

    pub fn acceleration(&self, t: f64) -> PlanarPose {
        match self.locate(t) {
            None => PlanarPose::default(),
            Some((k, tau)) => {
                let w = &self.waypoints;
                let span = w[k].t - w[k - 1].t;
                let dds = match w[k].blend {
                    Blend::Quintic => 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau),
                    Blend::Linear => 0.0,
                };
                PlanarPose::delta(&w[k - 1].pose, &w[k].pose, dds / (span * span))
            }
        }
    }

    /// Ground-truth path length in the plane, integrated numerically.
    pub fn path_length(&self) -> f64 {
        let steps = ((self.end_time() * 1000.0).ceil() as usize).max(1);
        let dt = self.end_time() / steps as f64;
        (0..steps)
            .map(|k| {
                let (a, b) = (self.pose(k as f64 * dt), self.pose((k + 1) as f64 * dt));
                ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt()
            })
            .sum()
    }
}

/// IMU error model. Gyro readings are `(1 + scale) * rate + bias + noise`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuNoise {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub gyro_scale_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub texture: TextureConfig,
    pub trajectory: Trajectory,
    pub frame_rate: f64,
    pub imu_rate: f64,
    pub tof_rate: f64,
    pub imu_noise: ImuNoise,
    pub tof_noise_std: f64,
    pub duration: f64,
    pub intrinsics: CameraIntrinsics,
    /// Also emit deterministic stand-in SuperPoint tensors for every frame.
    pub superpoint_proxy: bool,
}

pub const DEFAULT_INTRINSICS: CameraIntrinsics = CameraIntrinsics {
    fx: 480.0,
    fy: 480.0,
    cx: 80.0,
    cy: 60.0,
    width: 160,
    height: 120,
};

impl SynthConfig {
    pub fn with_trajectory(seed: u64, trajectory: Trajectory, duration: f64) -> Self {
        Self {
            seed,
            texture: TextureConfig {
                seed,
                ..TextureConfig::default()
            },
            trajectory,
            frame_rate: 100.0,
            imu_rate: 1000.0,
            tof_rate: 6.94,
            imu_noise: ImuNoise::default(),
            tof_noise_std: 0.0,
            duration,
            intrinsics: DEFAULT_INTRINSICS,
            superpoint_proxy: false,
        }
    }

    pub fn hover(seed: u64, duration: f64) -> Self {
        Self::with_trajectory(seed, Trajectory::hover(1.0).expect("valid"), duration)
    }

    /// Two laps of a 2 m square at 1 m height over 60 s, turning 90 degrees
    /// in place at each corner.
    pub fn square(seed: u64) -> Self {
        let mut legs = Vec::new();
        for _ in 0..2 {
            for (dx, dy) in [(2.0, 0.0), (0.0, 2.0), (-2.0, 0.0), (0.0, -2.0)] {
                legs.push((5.0, dx, dy, 0.0));
                legs.push((2.5, 0.0, 0.0, FRAC_PI_2));
            }
        }
        let traj = Trajectory::from_legs(PlanarPose::new(0.0, 0.0, 1.0, 0.0), &legs).expect("valid");
        Self::with_trajectory(seed, traj, 60.0)
    }

    /// Out and back twice with a 180 degree turn at each end.
    pub fn turns(seed: u64) -> Self {
        let legs = [
            (6.0, 2.0, 0.0, 0.0),
            (2.5, 0.0, 0.5, PI),
            (6.0, -2.0, 0.0, 0.0),
            (2.5, 0.0, 0.5, PI),
            (6.0, 2.0, 0.0, 0.0),
        ];
        let traj = Trajectory::from_legs(PlanarPose::new(0.0, 0.0, 1.0, 0.0), &legs).expect("valid");
        Self::with_trajectory(seed, traj, 23.0)
    }

    /// Same path length and timing as [`SynthConfig::turns`] without rotating.
    pub fn translation(seed: u64) -> Self {
        let legs = [
            (6.0, 2.0, 0.0, 0.0),
            (2.5, 0.0, 0.5, 0.0),
            (6.0, -2.0, 0.0, 0.0),
            (2.5, 0.0, 0.5, 0.0),
            (6.0, 2.0, 0.0, 0.0),
        ];
        let traj = Trajectory::from_legs(PlanarPose::new(0.0, 0.0, 1.0, 0.0), &legs).expect("valid");
        Self::with_trajectory(seed, traj, 23.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.texture.validate()?;
        self.intrinsics.validate()?;
        if !(self.frame_rate >= 1.0) {
            return Err(Error::Config(format!("frame_rate must be at least 1 Hz, got {}", self.frame_rate)));
        }
        if !(self.imu_rate >= self.frame_rate) {
            return Err(Error::Config("imu_rate must be at least the frame rate".into()));
        }
        if !(self.tof_rate > 0.0) || !(self.duration > 0.0) {
            return Err(Error::Config("tof_rate and duration must be positive".into()));
        }
        let n = &self.imu_noise;
        if !(n.accel_std >= 0.0 && n.gyro_std >= 0.0 && self.tof_noise_std >= 0.0) {
            return Err(Error::Config("noise standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    fn stamps(rate: f64, duration: f64) -> Vec<f64> {
        let n = (duration * rate + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 / rate).collect()
    }
}

/// Ideal body-frame IMU reading (camera axes: z down) at time `t`.
pub fn ideal_imu(traj: &Trajectory, t: f64) -> ImuSample {
    let pose = traj.pose(t);
    let vel = traj.velocity(t);
    let acc = traj.acceleration(t);
    let (s, c) = pose.psi.sin_cos();
    // world -> body: R(psi)^T; height up is body -z
    let ax = c * acc.x + s * acc.y;
    let ay = -s * acc.x + c * acc.y;
    ImuSample {
        timestamp: t,
        accel: Vector3::new(ax, ay, -acc.z - GRAVITY),
        gyro: Vector3::new(0.0, 0.0, vel.psi),
    }
}

/// Render, sample and corrupt a full synthetic sequence.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Sequence> {
    cfg.validate()?;
    let texture = Texture::generate(&cfg.texture)?;
    let traj = &cfg.trajectory;

    let frame_times = SynthConfig::stamps(cfg.frame_rate, cfg.duration);
    let frames: Vec<Frame> = frame_times
        .par_iter()
        .enumerate()
        .map(|(index, &t)| Frame {
            index,
            timestamp: t,
            image: texture.render(&traj.pose(t), &cfg.intrinsics),
        })
        .collect();

    let noise = cfg.imu_noise;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accel_n = Normal::new(0.0, noise.accel_std).map_err(|e| Error::Config(e.to_string()))?;
    let gyro_n = Normal::new(0.0, noise.gyro_std).map_err(|e| Error::Config(e.to_string()))?;
    let imu = SynthConfig::stamps(cfg.imu_rate, cfg.duration)
        .into_iter()
        .map(|t| {
            let ideal = ideal_imu(traj, t);
            let mut accel = ideal.accel;
            let mut gyro = ideal.gyro * (1.0 + noise.gyro_scale_error);
            for k in 0..3 {
                accel[k] += noise.accel_bias[k] + accel_n.sample(&mut rng);
                gyro[k] += noise.gyro_bias[k] + gyro_n.sample(&mut rng);
            }
            ImuSample {
                timestamp: t,
                accel,
                gyro,
            }
        })
        .collect();

    let tof_n = Normal::new(0.0, cfg.tof_noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let tof = SynthConfig::stamps(cfg.tof_rate, cfg.duration)
        .into_iter()
        .map(|t| TofSample {
            timestamp: t,
            range: traj.pose(t).z + tof_n.sample(&mut rng),
        })
        .collect();

    let ground_truth = frame_times
        .iter()
        .map(|&t| {
            let p = traj.pose(t);
            StampedPose::planar(t, p.x, p.y, p.z, p.psi)
        })
        .collect();

    let superpoint = if cfg.superpoint_proxy {
        SuperPointSource::InMemory(frames.par_iter().map(|f| superpoint_proxy(&f.image)).collect::<Result<_>>()?)
    } else {
        SuperPointSource::None
    };

    Ok(Sequence {
        frames,
        imu,
        tof,
        ground_truth,
        intrinsics: cfg.intrinsics,
        extrinsics: Extrinsics::default(),
        superpoint,
    })
}

const PROXY_SAMPLES: usize = 8;

fn proxy_projection() -> &'static [[i8; PROXY_SAMPLES * PROXY_SAMPLES]; DESC_DIM] {
    static TABLE: std::sync::OnceLock<Box<[[i8; PROXY_SAMPLES * PROXY_SAMPLES]; DESC_DIM]>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5350);
        let mut t = Box::new([[0i8; PROXY_SAMPLES * PROXY_SAMPLES]; DESC_DIM]);
        for row in t.iter_mut() {
            for v in row.iter_mut() {
                *v = if rng.random::<bool>() { 1 } else { -1 };
            }
        }
        t
    })
}

/// Deterministic stand-in for network output: a Harris-style heatmap and
/// random-projection patch descriptors on the 8x8 cell grid.
///
/// It lets the SuperPoint decoding and matching path run end to end on
/// synthetic data; it is not a learned detector.
pub fn superpoint_proxy(img: &Image8) -> Result<SpOutput> {
    let (w, h) = (img.width(), img.height());
    if w % CELL != 0 || h % CELL != 0 {
        return Err(Error::DimensionMismatch(format!("{w}x{h} is not a multiple of the 8 px cell")));
    }
    let (rows, cols) = (h / CELL, w / CELL);
    let grad = sobel3(img)?;
    let blurred = gaussian_blur5(img)?;

    let mut response = vec![0f64; w * h];
    response.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, r) in row.iter_mut().enumerate() {
            let (mut a, mut b, mut c) = (0f64, 0f64, 0f64);
            for yy in y.saturating_sub(2)..(y + 3).min(h) {
                for xx in x.saturating_sub(2)..(x + 3).min(w) {
                    let gx = grad.ix_at(xx, yy) as f64;
                    let gy = grad.iy_at(xx, yy) as f64;
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            }
            *r = (a * c - b * b - 0.04 * (a + c) * (a + c)).max(0.0);
        }
    });
    let peak = response.iter().copied().fold(0.0, f64::max);
    let mut heat = vec![0u8; HEAT_CHANNELS * rows * cols];
    if peak > 0.0 {
        for y in 0..h {
            for x in 0..w {
                let ch = (y % CELL) * CELL + x % CELL;
                let idx = (ch * rows + y / CELL) * cols + x / CELL;
                heat[idx] = (255.0 * response[y * w + x] / peak).round() as u8;
            }
        }
    }

    let proj = proxy_projection();
    let mut desc = vec![0u8; DESC_DIM * rows * cols];
    let cells: Vec<(usize, usize, [i8; DESC_DIM])> = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / cols, k % cols);
            let mut patch = [0f64; PROXY_SAMPLES * PROXY_SAMPLES];
            for (n, p) in patch.iter_mut().enumerate() {
                let sx = (CELL * j + 4) as isize + 2 * (n % PROXY_SAMPLES) as isize - 7;
                let sy = (CELL * i + 4) as isize + 2 * (n / PROXY_SAMPLES) as isize - 7;
                let sx = sx.clamp(0, w as isize - 1) as usize;
                let sy = sy.clamp(0, h as isize - 1) as usize;
                *p = blurred.get(sx, sy) as f64;
            }
            let mean = patch.iter().sum::<f64>() / patch.len() as f64;
            patch.iter_mut().for_each(|p| *p -= mean);
            let mut v = [0f64; DESC_DIM];
            for (d, row) in v.iter_mut().zip(proj.iter()) {
                *d = row.iter().zip(&patch).map(|(&s, &p)| s as f64 * p).sum();
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut q = [0i8; DESC_DIM];
            if norm > 0.0 {
                for (o, x) in q.iter_mut().zip(&v) {
                    *o = (127.0 * x / norm).round() as i8;
                }
            }
            (i, j, q)
        })
        .collect();
    for (i, j, q) in cells {
        for (ch, &v) in q.iter().enumerate() {
            desc[(ch * rows + i) * cols + j] = v as u8;
        }
    }
    SpOutput::new(
        QTensor::new([HEAT_CHANNELS, rows, cols], 1.0 / 255.0, 0, heat)?,
        QTensor::new([DESC_DIM, rows, cols], 1.0 / 127.0, 0, desc)?,
    )
}
