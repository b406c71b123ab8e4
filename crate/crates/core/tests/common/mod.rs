//! Independent reference implementations and scene builders shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use dfvio::eval::{PosePair, StampedPose};
use dfvio::{Image8, TrackedMatch};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise_image(rng: &mut impl Rng, w: usize, h: usize) -> Image8 {
    Image8::from_fn(w, h, |_, _| rng.random())
}

/// Random noise with flat blocks pasted in, so both busy and quiet areas occur.
pub fn blocky_image(rng: &mut impl Rng, w: usize, h: usize) -> Image8 {
    let mut img = noise_image(rng, w, h);
    for _ in 0..6 {
        let (bw, bh) = (rng.random_range(3..w / 2), rng.random_range(3..h / 2));
        let (x0, y0) = (rng.random_range(0..w - bw), rng.random_range(0..h - bh));
        let v: u8 = rng.random();
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                img.set(x, y, v);
            }
        }
    }
    img
}

/// Band-limited intensity field built from random plane waves.
#[derive(Clone, Debug)]
pub struct WaveField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl WaveField {
    pub fn new(rng: &mut impl Rng, count: usize, min_period: f64, max_period: f64) -> Self {
        let waves = (0..count)
            .map(|_| {
                let dir = rng.random_range(0.0..PI);
                let k = 2.0 * PI / rng.random_range(min_period..max_period);
                let amp = rng.random_range(0.5..1.0);
                (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..2.0 * PI), amp)
            })
            .collect();
        Self { waves }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let norm: f64 = self.waves.iter().map(|w| w.3).sum();
        let s: f64 = self.waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum();
        (128.0 + 120.0 * s / norm).clamp(0.0, 255.0)
    }

    /// Frame whose pixel `(x, y)` shows the field at `(x - dx, y - dy)`, i.e.
    /// the content moved by `(dx, dy)`.
    pub fn render(&self, w: usize, h: usize, dx: f64, dy: f64) -> Image8 {
        Image8::from_fn(w, h, |x, y| self.value(x as f64 - dx, y as f64 - dy).round() as u8)
    }

    /// Frame with the content rotated by `angle` about `(cx, cy)`.
    pub fn render_rotated(&self, w: usize, h: usize, cx: f64, cy: f64, angle: f64) -> Image8 {
        let (s, c) = angle.sin_cos();
        Image8::from_fn(w, h, |x, y| {
            let (u, v) = (x as f64 - cx, y as f64 - cy);
            self.value(c * u + s * v + cx, -s * u + c * v + cy).round() as u8
        })
    }
}

// ---------------------------------------------------------------------------
// FAST
// ---------------------------------------------------------------------------

const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Exhaustive segment test: every start position and both polarities are
/// tried. The score sums `|ring - center|` over the longest qualifying arc,
/// which is the largest sum over all starts.
pub fn fast_oracle(img: &Image8, threshold: u8, margin: usize) -> BTreeMap<(u32, u32), u16> {
    let mut out = BTreeMap::new();
    let (w, h) = (img.width(), img.height());
    if w <= 2 * margin || h <= 2 * margin {
        return out;
    }
    for y in margin..h - margin {
        for x in margin..w - margin {
            let c = img.get(x, y) as i32;
            let ring: Vec<i32> = CIRCLE
                .iter()
                .map(|&(dx, dy)| img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i32)
                .collect();
            let t = threshold as i32;
            let mut best: Option<u16> = None;
            for bright in [true, false] {
                let hit = |v: i32| if bright { v > c + t } else { v < c - t };
                for start in 0..16 {
                    let len = (0..16).take_while(|&k| hit(ring[(start + k) % 16])).count();
                    if len >= 9 {
                        let score: i32 = (0..len).map(|k| (ring[(start + k) % 16] - c).abs()).sum();
                        best = Some(best.map_or(score as u16, |b| b.max(score as u16)));
                    }
                }
            }
            if let Some(s) = best {
                out.insert((x as u32, y as u32), s);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Harris
// ---------------------------------------------------------------------------

pub const HARRIS_K: f64 = 0.04;

/// Floating-point Harris response with the structure tensor scaled by 2^-11,
/// alongside the magnitude of the error that rounding the tensor entries to
/// integers and `k` to 41/1024 can introduce.
pub fn harris_oracle(img: &Image8, x: usize, y: usize) -> (f64, f64) {
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    let grad = |x: usize, y: usize| {
        let gx = px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
            - px(x - 1, y - 1)
            - 2.0 * px(x - 1, y)
            - px(x - 1, y + 1);
        let gy = px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
            - px(x - 1, y - 1)
            - 2.0 * px(x, y - 1)
            - px(x + 1, y - 1);
        (gx, gy)
    };
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for yy in y - 3..=y + 3 {
        for xx in x - 3..=x + 3 {
            let (gx, gy) = grad(xx, yy);
            a += gx * gx;
            b += gx * gy;
            c += gy * gy;
        }
    }
    let s = 2f64.powi(-11);
    let (a, b, c) = (a * s, b * s, c * s);
    let trace = a + c;
    let score = a * c - b * b - HARRIS_K * trace * trace;
    let k_int = 41.0 / 1024.0;
    let bound = 0.5 * (a.abs() + c.abs()) + b.abs() + 0.5
        + k_int * (2.0 * trace.abs() + 1.0)
        + 0.5
        + (k_int - HARRIS_K).abs() * trace * trace;
    (score, bound)
}

// ---------------------------------------------------------------------------
// Rigid motion scenes
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct PlanarMotion {
    pub du: f64,
    pub dv: f64,
    pub dpsi: f64,
}

impl PlanarMotion {
    pub fn random(rng: &mut impl Rng, max_shift: f64, max_angle: f64) -> Self {
        Self {
            du: rng.random_range(-max_shift..max_shift),
            dv: rng.random_range(-max_shift..max_shift),
            dpsi: rng.random_range(-max_angle..max_angle),
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.dpsi.sin_cos();
        (c * x - s * y + self.du, s * x + c * y + self.dv)
    }
}

/// Smallest distance between an outlier and the position its point would
/// have under the true motion.
pub const GROSS_ERROR_PX: f64 = 10.0;

/// `inliers` points moved by `motion` with Gaussian noise, plus `outliers`
/// random pairs anywhere in a 160x120 frame centered at the origin.
pub fn rigid_scene(
    rng: &mut impl Rng,
    motion: PlanarMotion,
    inliers: usize,
    outliers: usize,
    noise_px: f64,
) -> Vec<TrackedMatch> {
    fn point(rng: &mut impl Rng) -> (f64, f64) {
        (rng.random_range(-75.0..75.0), rng.random_range(-55.0..55.0))
    }
    let mut out = Vec::with_capacity(inliers + outliers);
    let normal = Normal::new(0.0, noise_px.max(f64::MIN_POSITIVE)).unwrap();
    for _ in 0..inliers {
        let (px, py) = point(rng);
        let (cx, cy) = motion.apply(px, py);
        let (nx, ny) = if noise_px > 0.0 {
            (normal.sample(rng), normal.sample(rng))
        } else {
            (0.0, 0.0)
        };
        out.push(TrackedMatch {
            px,
            py,
            cx: cx + nx,
            cy: cy + ny,
        });
    }
    while out.len() < inliers + outliers {
        let (px, py) = point(rng);
        let (cx, cy) = point(rng);
        let (tx, ty) = motion.apply(px, py);
        if (cx - tx).hypot(cy - ty) >= GROSS_ERROR_PX {
            out.push(TrackedMatch { px, py, cx, cy });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Smooth random planar walk sampled every `dt`, returned as `(t, x, y, z, psi)`.
pub fn random_walk(rng: &mut impl Rng, n: usize, dt: f64) -> Vec<(f64, f64, f64, f64, f64)> {
    let (mut x, mut y, mut z, mut psi) = (0.0, 0.0, 1.0, 0.0);
    let (mut vx, mut vy, mut r) = (0.3, 0.0, 0.0);
    (0..n)
        .map(|k| {
            vx += rng.random_range(-0.05..0.05);
            vy += rng.random_range(-0.05..0.05);
            r = (r + rng.random_range(-0.1..0.1f64)).clamp(-1.0, 1.0);
            x += vx * dt;
            y += vy * dt;
            z += rng.random_range(-0.002..0.002);
            psi += r * dt;
            (k as f64 * dt, x, y, z, psi)
        })
        .collect()
}

pub fn to_poses(samples: &[(f64, f64, f64, f64, f64)]) -> Vec<StampedPose> {
    samples
        .iter()
        .map(|&(t, x, y, z, psi)| StampedPose::planar(t, x, y, z, psi))
        .collect()
}

/// Ground truth plus a drifting estimate of it on the same timestamps.
pub fn trajectory_pair(rng: &mut impl Rng, n: usize) -> (Vec<(f64, f64, f64, f64, f64)>, Vec<(f64, f64, f64, f64, f64)>) {
    let gt = random_walk(rng, n, 0.05);
    let (mut ex, mut ey, mut epsi) = (0.0, 0.0, 0.0);
    let est = gt
        .iter()
        .map(|&(t, x, y, z, psi)| {
            ex += rng.random_range(-0.004..0.005);
            ey += rng.random_range(-0.004..0.004);
            epsi += rng.random_range(-0.003..0.003);
            (t, x + ex, y + ey, z + rng.random_range(-0.01..0.01), psi + epsi)
        })
        .collect();
    (gt, est)
}

/// Relative translation error computed the slow way: for every start, walk
/// the ground truth summing segment lengths until `length` is reached, then
/// transport the estimated displacement into the ground-truth start frame.
pub fn rte_oracle(
    gt: &[(f64, f64, f64, f64, f64)],
    est: &[(f64, f64, f64, f64, f64)],
    length: f64,
) -> Option<f64> {
    let dist = |a: &(f64, f64, f64, f64, f64), b: &(f64, f64, f64, f64, f64)| {
        ((a.1 - b.1).powi(2) + (a.2 - b.2).powi(2) + (a.3 - b.3).powi(2)).sqrt()
    };
    let mut errors = Vec::new();
    for i in 0..gt.len() {
        let mut walked = 0.0;
        let mut end = None;
        for j in i + 1..gt.len() {
            walked += dist(&gt[j - 1], &gt[j]);
            if walked >= length {
                end = Some(j);
                break;
            }
        }
        let Some(j) = end else { continue };
        let (ei, ej) = (est[i], est[j]);
        let (dx, dy, dz) = (ej.1 - ei.1, ej.2 - ei.2, ej.3 - ei.3);
        // estimated displacement expressed in the estimate's start frame
        let (s, c) = ei.4.sin_cos();
        let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
        let (s, c) = gt[i].4.sin_cos();
        let px = gt[i].1 + c * lx - s * ly;
        let py = gt[i].2 + s * lx + c * ly;
        let pz = gt[i].3 + dz;
        let e = ((px - gt[j].1).powi(2) + (py - gt[j].2).powi(2) + (pz - gt[j].3).powi(2)).sqrt();
        errors.push(100.0 * e / length);
    }
    (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64)
}

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-PI..PI);
    UnitQuaternion::from_scaled_axis(axis.normalize() * angle)
}

pub fn random_points(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            )
        })
        .collect()
}

pub fn pose_pairs(est: &[StampedPose], gt: &[StampedPose]) -> Vec<PosePair> {
    est.iter()
        .zip(gt)
        .map(|(&estimate, &truth)| PosePair { estimate, truth })
        .collect()
}
