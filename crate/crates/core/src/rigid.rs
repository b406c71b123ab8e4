//! Planar rigid-body motion from tracked feature pairs.
//!
//! Pixel coordinates are relative to the image center. The fit solves
//! `q ≈ R(dpsi) p + t` for previous positions `p` and current positions `q`
//! with a histogram prefilter followed by two least-squares solves, the second
//! on the matches that reproject within a fixed pixel gate.

use std::cmp::Ordering;
use std::collections::BTreeMap;

/// A feature observed in two consecutive frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedMatch {
    pub px: f64,
    pub py: f64,
    pub cx: f64,
    pub cy: f64,
}

impl TrackedMatch {
    #[inline]
    pub fn displacement(&self) -> (f64, f64) {
        (self.cx - self.px, self.cy - self.py)
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.px
            .total_cmp(&other.px)
            .then(self.py.total_cmp(&other.py))
            .then(self.cx.total_cmp(&other.cx))
            .then(self.cy.total_cmp(&other.cy))
    }
}

/// Image-plane motion between two frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidMotion2D {
    pub du: f64,
    pub dv: f64,
    pub dpsi: f64,
    pub inlier_count: usize,
    pub valid: bool,
}

impl RigidMotion2D {
    pub const INVALID: Self = Self {
        du: 0.0,
        dv: 0.0,
        dpsi: 0.0,
        inlier_count: 0,
        valid: false,
    };

    /// Where a previous-frame point lands under this motion.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.dpsi.sin_cos();
        (c * x - s * y + self.du, s * x + c * y + self.dv)
    }

    /// Motion of the camera itself, in pixels of the previous frame.
    ///
    /// Scene points move opposite to the camera: a camera translation `d`
    /// and yaw `a` produce `q = R(-a) p - R(-a) d`, so `a = -dpsi` and
    /// `d = -R(dpsi)^T t`.
    pub fn camera_motion(&self) -> Self {
        let (s, c) = self.dpsi.sin_cos();
        Self {
            du: -(c * self.du + s * self.dv),
            dv: -(-s * self.du + c * self.dv),
            dpsi: -self.dpsi,
            ..*self
        }
    }
}

/// Tunables of the two-stage outlier rejection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionParams {
    /// Half-width of the per-axis band kept around the histogram mode.
    pub prefilter_band_px: f64,
    /// Reprojection gate for the second solve.
    pub reprojection_gate_px: f64,
    pub min_inliers: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            prefilter_band_px: 5.0,
            reprojection_gate_px: 1.5,
            min_inliers: 3,
        }
    }
}

/// Mode of 1-px bins centered on integers; ties go to the smaller magnitude.
fn modal_bin(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.round() as i64).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(ka, na), (kb, nb)| na.cmp(nb).then(kb.abs().cmp(&ka.abs())).then(kb.cmp(ka)))
        .map(|(k, _)| k as f64)
}

/// Keep matches whose displacement lies within `band` pixels of the modal
/// displacement bin on both axes.
pub fn histogram_prefilter_with(matches: &[TrackedMatch], band: f64) -> Vec<TrackedMatch> {
    let Some(base_x) = modal_bin(matches.iter().map(|m| m.displacement().0)) else {
        return Vec::new();
    };
    let base_y = modal_bin(matches.iter().map(|m| m.displacement().1)).unwrap_or(0.0);
    matches
        .iter()
        .filter(|m| {
            let (dx, dy) = m.displacement();
            (dx - base_x).abs() <= band && (dy - base_y).abs() <= band
        })
        .copied()
        .collect()
}

pub fn histogram_prefilter(matches: &[TrackedMatch]) -> Vec<TrackedMatch> {
    histogram_prefilter_with(matches, MotionParams::default().prefilter_band_px)
}

/// Singular value decomposition of a 2x2 matrix `m = U diag(s) V^T`, given
/// row-major. Singular values are non-negative and sorted descending;
/// `U` and `V` are orthogonal but may be reflections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd2 {
    pub u: [[f64; 2]; 2],
    pub s: [f64; 2],
    pub v: [[f64; 2]; 2],
}

pub fn svd2x2(m: [[f64; 2]; 2]) -> Svd2 {
    let [[a, b], [c, d]] = m;
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let s1 = q + r;
    let mut s2 = q - r;
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let theta = 0.5 * (a2 - a1);
    let phi = 0.5 * (a2 + a1);
    // m = R(phi) diag(s1, s2) R(theta)
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let mut u = [[cp, -sp], [sp, cp]];
    // V = R(theta)^T
    let v = [[ct, st], [-st, ct]];
    if s2 < 0.0 {
        s2 = -s2;
        u[0][1] = -u[0][1];
        u[1][1] = -u[1][1];
    }
    Svd2 { u, s: [s1, s2], v }
}

fn mat_mul_t(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    // a * b^T
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, val) in row.iter_mut().enumerate() {
            *val = a[i][0] * b[j][0] + a[i][1] * b[j][1];
        }
    }
    out
}

/// Least-squares rotation and translation mapping previous to current positions.
pub fn solve_rigid_2d(matches: &[TrackedMatch]) -> RigidMotion2D {
    solve_rigid_2d_min(matches, MotionParams::default().min_inliers)
}

fn solve_rigid_2d_min(matches: &[TrackedMatch], min_inliers: usize) -> RigidMotion2D {
    let n = matches.len();
    if n < min_inliers.max(1) {
        return RigidMotion2D::INVALID;
    }
    let inv_n = 1.0 / n as f64;
    let (mut pbx, mut pby, mut qbx, mut qby) = (0.0, 0.0, 0.0, 0.0);
    for m in matches {
        pbx += m.px;
        pby += m.py;
        qbx += m.cx;
        qby += m.cy;
    }
    pbx *= inv_n;
    pby *= inv_n;
    qbx *= inv_n;
    qby *= inv_n;

    let mut h = [[0.0f64; 2]; 2];
    let mut spread = 0.0;
    for m in matches {
        let p = [m.px - pbx, m.py - pby];
        let q = [m.cx - qbx, m.cy - qby];
        spread += p[0] * p[0] + p[1] * p[1];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] += p[i] * q[j];
            }
        }
    }
    let h_norm = h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if spread <= 1e-12 || h_norm <= 1e-12 * spread.max(1.0) {
        return RigidMotion2D::INVALID;
    }

    let svd = svd2x2(h);
    // R = V diag(1, d) U^T with d fixing reflections
    let vut = mat_mul_t(svd.v, svd.u);
    let det = vut[0][0] * vut[1][1] - vut[0][1] * vut[1][0];
    let mut v = svd.v;
    if det < 0.0 {
        v[0][1] = -v[0][1];
        v[1][1] = -v[1][1];
    }
    let r = mat_mul_t(v, svd.u);
    let dpsi = r[1][0].atan2(r[0][0]);
    RigidMotion2D {
        du: qbx - (r[0][0] * pbx + r[0][1] * pby),
        dv: qby - (r[1][0] * pbx + r[1][1] * pby),
        dpsi,
        inlier_count: n,
        valid: true,
    }
}

fn reprojection_error(motion: &RigidMotion2D, m: &TrackedMatch) -> f64 {
    let (x, y) = motion.apply(m.px, m.py);
    (x - m.cx).hypot(y - m.cy)
}

/// Mean reprojection error of `motion` over `matches`.
pub fn mean_reprojection_error(motion: &RigidMotion2D, matches: &[TrackedMatch]) -> f64 {
    if matches.is_empty() {
        return 0.0;
    }
    matches.iter().map(|m| reprojection_error(motion, m)).sum::<f64>() / matches.len() as f64
}

/// Intermediate results of [`estimate_motion`], for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionEstimate {
    pub motion: RigidMotion2D,
    pub preliminary: RigidMotion2D,
    pub prefilter_inliers: Vec<TrackedMatch>,
    pub final_inliers: Vec<TrackedMatch>,
}

pub fn estimate_motion(matches: &[TrackedMatch]) -> RigidMotion2D {
    estimate_motion_detailed(matches, &MotionParams::default()).motion
}

/// Histogram prefilter, preliminary solve, re-classification of every match
/// against the preliminary motion, and a final solve on the inliers.
pub fn estimate_motion_detailed(matches: &[TrackedMatch], params: &MotionParams) -> MotionEstimate {
    // canonical order makes the floating-point sums independent of input order
    let mut sorted = matches.to_vec();
    sorted.sort_by(TrackedMatch::total_cmp);

    let prefilter_inliers = histogram_prefilter_with(&sorted, params.prefilter_band_px);
    let mut out = MotionEstimate {
        motion: RigidMotion2D::INVALID,
        preliminary: RigidMotion2D::INVALID,
        prefilter_inliers,
        final_inliers: Vec::new(),
    };
    if out.prefilter_inliers.len() < params.min_inliers {
        return out;
    }
    out.preliminary = solve_rigid_2d_min(&out.prefilter_inliers, params.min_inliers);
    if !out.preliminary.valid {
        return out;
    }
    out.final_inliers = sorted
        .iter()
        .filter(|m| reprojection_error(&out.preliminary, m) <= params.reprojection_gate_px)
        .copied()
        .collect();
    if out.final_inliers.len() >= params.min_inliers {
        out.motion = solve_rigid_2d_min(&out.final_inliers, params.min_inliers);
    }
    out
}
