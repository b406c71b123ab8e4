//! Trajectory association, sim(3) alignment, RMSE and relative translation
//! error over fixed ground-truth path lengths.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DT: f64 = 0.02;
pub const DEFAULT_ALIGN_WINDOW: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl StampedPose {
    /// Pose at `(x, y, z)` rotated by `psi` about the vertical axis.
    pub fn planar(timestamp: f64, x: f64, y: f64, z: f64, psi: f64) -> Self {
        Self {
            timestamp,
            position: Vector3::new(x, y, z),
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), psi),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }
}

/// Parse a TUM trajectory (`t tx ty tz qx qy qz qw`). `#` starts a comment.
pub fn parse_tum(text: &str, origin: &Path) -> Result<Vec<StampedPose>> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::malformed(
                origin,
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::malformed(origin, line_no, format!("not a number: {f:?}")))?;
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::malformed(origin, line_no, format!("quaternion norm {norm} is not 1")));
        }
        if let Some(prev) = poses.last().map(|p: &StampedPose| p.timestamp) {
            if v[0] <= prev {
                return Err(Error::NonMonotoneTimestamp {
                    path: origin.to_path_buf(),
                    line: line_no,
                    timestamp: v[0],
                });
            }
        }
        poses.push(StampedPose {
            timestamp: v[0],
            position: Vector3::new(v[1], v[2], v[3]),
            orientation: UnitQuaternion::from_quaternion(q),
        });
    }
    Ok(poses)
}

pub fn read_tum(path: &Path) -> Result<Vec<StampedPose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tum(&text, path)
}

pub fn format_tum(poses: &[StampedPose]) -> String {
    let mut out = String::new();
    for p in poses {
        let q = p.orientation.quaternion();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.timestamp, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

pub fn write_tum(path: &Path, poses: &[StampedPose]) -> Result<()> {
    std::fs::write(path, format_tum(poses)).map_err(|e| Error::io(path, e))
}

/// Estimated pose paired with its ground-truth counterpart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosePair {
    pub estimate: StampedPose,
    pub truth: StampedPose,
}

/// Pair poses by nearest timestamp within `max_dt`. Each pose of either
/// trajectory is used at most once; closer pairs win. Output follows the
/// ground-truth order.
pub fn associate(traj: &[StampedPose], gt: &[StampedPose], max_dt: f64) -> Result<Vec<PosePair>> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        let k = traj.partition_point(|p| p.timestamp < g.timestamp);
        let best = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < traj.len())
            .map(|j| ((traj[j].timestamp - g.timestamp).abs(), j))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((dt, j)) = best {
            if dt <= max_dt {
                candidates.push((dt, gi, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut used = vec![false; traj.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (_, gi, j) in candidates {
        if !used[j] {
            used[j] = true;
            pairs.push((gi, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyAssociation);
    }
    pairs.sort_unstable();
    Ok(pairs
        .into_iter()
        .map(|(gi, j)| PosePair {
            estimate: traj[j],
            truth: gt[gi],
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentResult {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl AlignmentResult {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

/// Closed-form similarity transform minimising `sum |s R e_i + t - g_i|^2`.
pub fn align_sim3(estimate: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<AlignmentResult> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated vs {} reference positions",
            estimate.len(),
            truth.len()
        )));
    }
    let n = estimate.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("alignment needs at least 3 positions, got {n}")));
    }
    let nf = n as f64;
    let mu_e = estimate.iter().sum::<Vector3<f64>>() / nf;
    let mu_g = truth.iter().sum::<Vector3<f64>>() / nf;
    let var_e = estimate.iter().map(|e| (e - mu_e).norm_squared()).sum::<f64>() / nf;
    let sigma = estimate
        .iter()
        .zip(truth)
        .map(|(e, g)| (g - mu_g) * (e - mu_e).transpose())
        .sum::<Matrix3<f64>>()
        / nf;

    let svd = sigma.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut d = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    if !(var_e > 0.0) || !(d[order[1]] > 1e-10 * d[order[0]]) {
        return Err(Error::Degenerate("alignment positions are collinear or coincident".into()));
    }
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the weakest direction
        s[(order[2], order[2])] = -1.0;
        d[order[2]] = -d[order[2]];
    }
    let rotation = u * s * v_t;
    let scale = d.sum() / var_e;
    let translation = mu_g - rotation * mu_e * scale;
    Ok(AlignmentResult {
        scale,
        rotation,
        translation,
    })
}

/// Residual sum of squares of an alignment over paired positions.
pub fn alignment_residual(a: &AlignmentResult, estimate: &[Vector3<f64>], truth: &[Vector3<f64>]) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(e, g)| (a.apply(e) - g).norm_squared())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmseReport {
    pub rmse: f64,
    /// Standard deviation of the per-pose position error.
    pub std: f64,
    pub pairs: usize,
    pub alignment: AlignmentResult,
}

/// Align on the first `align_window_s` seconds of ground truth, then score the
/// whole associated trajectory.
pub fn rmse(traj: &[StampedPose], gt: &[StampedPose], align_window_s: f64, max_dt: f64) -> Result<RmseReport> {
    let pairs = associate(traj, gt, max_dt)?;
    let t0 = pairs[0].truth.timestamp;
    let (est_w, gt_w): (Vec<_>, Vec<_>) = pairs
        .iter()
        .take_while(|p| p.truth.timestamp - t0 <= align_window_s)
        .map(|p| (p.estimate.position, p.truth.position))
        .unzip();
    let alignment = align_sim3(&est_w, &gt_w)?;
    let errors: Vec<f64> = pairs
        .iter()
        .map(|p| (alignment.apply(&p.estimate.position) - p.truth.position).norm())
        .collect();
    let n = errors.len() as f64;
    let mean_sq = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(RmseReport {
        rmse: mean_sq.sqrt(),
        std: var.sqrt(),
        pairs: errors.len(),
        alignment,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeError {
    pub length_m: f64,
    /// Mean end-point error in percent of the length; `None` when no
    /// sub-trajectory of this length exists.
    pub mean_pct: Option<f64>,
    pub samples: usize,
}

fn yaw_rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// End-point error of the estimate re-anchored at ground-truth pose `i` and
/// compared at pose `j`.
pub fn anchored_error(pairs: &[PosePair], i: usize, j: usize) -> f64 {
    let (ei, ej) = (&pairs[i].estimate, &pairs[j].estimate);
    let (gi, gj) = (&pairs[i].truth, &pairs[j].truth);
    let local = yaw_rotation(ei.yaw()).transpose() * (ej.position - ei.position);
    let predicted = gi.position + yaw_rotation(gi.yaw()) * local;
    (predicted - gj.position).norm()
}

/// Cumulative ground-truth path length at each pair.
pub fn arc_lengths(pairs: &[PosePair]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(pairs.len());
    for (k, p) in pairs.iter().enumerate() {
        if k > 0 {
            acc += (p.truth.position - pairs[k - 1].truth.position).norm();
        }
        out.push(acc);
    }
    out
}

/// Mean relative translation error for each requested path length, using
/// every associated ground-truth pose as a start.
pub fn relative_translation_error(
    traj: &[StampedPose],
    gt: &[StampedPose],
    lengths_m: &[f64],
    max_dt: f64,
) -> Result<Vec<RelativeError>> {
    if let Some(bad) = lengths_m.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::InvalidArgument(format!("lengths must be positive, got {bad}")));
    }
    let pairs = associate(traj, gt, max_dt)?;
    let arc = arc_lengths(&pairs);
    Ok(lengths_m
        .par_iter()
        .map(|&length| {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut j = 0usize;
            for i in 0..pairs.len() {
                j = j.max(i + 1);
                while j < pairs.len() && arc[j] - arc[i] < length {
                    j += 1;
                }
                if j >= pairs.len() {
                    break;
                }
                sum += anchored_error(&pairs, i, j) / length * 100.0;
                count += 1;
            }
            RelativeError {
                length_m: length,
                mean_pct: (count > 0).then(|| sum / count as f64),
                samples: count,
            }
        })
        .collect())
}

/// CSV report with `length_m,mean_error_pct`; unavailable lengths are left blank.
pub fn relative_error_csv(rows: &[RelativeError]) -> String {
    let mut out = String::from("length_m,mean_error_pct\n");
    for r in rows {
        let v = r.mean_pct.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{}", r.length_m, v);
    }
    out
}

/// Human-readable summary table.
pub fn format_report(rmse: Option<&RmseReport>, rows: &[RelativeError]) -> String {
    let mut out = String::new();
    if let Some(r) = rmse {
        let _ = writeln!(out, "RMSE [m]        {:.4} (std {:.4}, {} poses)", r.rmse, r.std, r.pairs);
        let _ = writeln!(out, "alignment scale {:.4}", r.alignment.scale);
    }
    for row in rows {
        match row.mean_pct {
            Some(v) => {
                let _ = writeln!(out, "over {:>6} m   {:>8.3} %  ({} starts)", row.length_m, v, row.samples);
            }
            None => {
                let _ = writeln!(out, "over {:>6} m   unavailable (path too short)", row.length_m);
            }
        }
    }
    out
}
