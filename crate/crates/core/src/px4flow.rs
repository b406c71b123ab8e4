//! PX4FLOW-style block matching on a fixed grid of interest points.
//!
//! Each grid patch is searched exhaustively with SAD over the integer window
//! `[-r, r]^2`, then refined at the eight surrounding half-pixel offsets using
//! 2x2 averaged (bilinear at 0.5) target patches. All arithmetic is integer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgproc::Image8;
use crate::rigid::TrackedMatch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub patch_size: usize,
    pub search_radius: usize,
    pub enable_halfpixel: bool,
    /// Minimum gap between the best SAD and the best SAD outside the winner's
    /// 3x3 neighbourhood; `None` means `patch_size^2`.
    pub min_sad_margin: Option<u32>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            grid_cols: 10,
            grid_rows: 8,
            patch_size: 8,
            search_radius: 4,
            enable_halfpixel: true,
            min_sad_margin: None,
        }
    }
}

impl FlowConfig {
    fn sad_margin(&self) -> u32 {
        self.min_sad_margin
            .unwrap_or((self.patch_size * self.patch_size) as u32)
    }

    /// Pixels kept clear between a patch and the frame edge.
    pub fn edge_clearance(&self) -> usize {
        self.search_radius + 1
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.grid_cols == 0 || self.grid_rows == 0 || self.patch_size == 0 {
            return Err(Error::Config("flow grid and patch size must be positive".into()));
        }
        let need = self.patch_size + 2 * self.edge_clearance();
        if need > width || need > height {
            return Err(Error::Config(format!(
                "patch {} with search radius {} needs {need} px, frame is {width}x{height}",
                self.patch_size, self.search_radius
            )));
        }
        Ok(())
    }

    /// Top-left corners of the grid patches, evenly spread over the region
    /// where the full search window stays inside the frame.
    pub fn grid_origins(&self, width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
        self.validate(width, height)?;
        let lo = self.edge_clearance();
        let spread = |n: usize, extent: usize| -> Vec<usize> {
            let hi = extent - self.patch_size - lo;
            if n == 1 {
                return vec![(lo + hi) / 2];
            }
            (0..n).map(|i| lo + (i * (hi - lo) + (n - 1) / 2) / (n - 1)).collect()
        };
        let xs = spread(self.grid_cols, width);
        let ys = spread(self.grid_rows, height);
        Ok(ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect())
    }
}

/// Flow of one grid patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowVector {
    /// Patch center relative to the image center, in half pixels.
    pub x_half: i32,
    pub y_half: i32,
    /// Displacement in half pixels.
    pub du_half: i16,
    pub dv_half: i16,
    /// Winning SAD, in quarter-intensity units (4x an integer-position SAD).
    pub sad: u32,
    pub valid: bool,
}

impl FlowVector {
    #[inline]
    pub fn x(&self) -> f64 {
        self.x_half as f64 / 2.0
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y_half as f64 / 2.0
    }

    #[inline]
    pub fn du(&self) -> f64 {
        self.du_half as f64 / 2.0
    }

    #[inline]
    pub fn dv(&self) -> f64 {
        self.dv_half as f64 / 2.0
    }

    pub fn to_match(&self) -> TrackedMatch {
        TrackedMatch {
            px: self.x(),
            py: self.y(),
            cx: self.x() + self.du(),
            cy: self.y() + self.dv(),
        }
    }
}

fn sad_integer(prev: &Image8, cur: &Image8, x0: usize, y0: usize, dx: isize, dy: isize, n: usize) -> u32 {
    let mut acc = 0u32;
    for j in 0..n {
        let a = &prev.row(y0 + j)[x0..x0 + n];
        let yy = (y0 + j) as isize + dy;
        let start = (x0 as isize + dx) as usize;
        let b = &cur.row(yy as usize)[start..start + n];
        for (p, q) in a.iter().zip(b) {
            acc += p.abs_diff(*q) as u32;
        }
    }
    acc
}

/// SAD against a target sampled at `(dx + hx/2, dy + hy/2)` with `hx, hy`
/// in `{-1, 0, 1}`, scaled by 4 so no rounding is needed.
#[allow(clippy::too_many_arguments)]
fn sad_half(prev: &Image8, cur: &Image8, x0: usize, y0: usize, dx: isize, dy: isize, hx: isize, hy: isize, n: usize) -> u32 {
    let mut acc = 0u32;
    let w = cur.width() as isize;
    let data = cur.data();
    // neighbours of the integer target contributing to the half-pixel average
    let ox = if hx < 0 { -1 } else { 0 };
    let oy = if hy < 0 { -1 } else { 0 };
    let step_x = hx != 0;
    let step_y = hy != 0;
    for j in 0..n {
        let ty = (y0 + j) as isize + dy + oy;
        let prev_row = &prev.row(y0 + j)[x0..x0 + n];
        for (i, &p) in prev_row.iter().enumerate() {
            let tx = (x0 + i) as isize + dx + ox;
            let idx = (ty * w + tx) as usize;
            let v00 = data[idx] as u32;
            let interp = match (step_x, step_y) {
                (false, false) => 4 * v00,
                (true, false) => 2 * (v00 + data[idx + 1] as u32),
                (false, true) => 2 * (v00 + data[idx + w as usize] as u32),
                (true, true) => {
                    v00 + data[idx + 1] as u32 + data[idx + w as usize] as u32 + data[idx + w as usize + 1] as u32
                }
            };
            acc += (4 * p as u32).abs_diff(interp);
        }
    }
    acc
}

fn flow_at(prev: &Image8, cur: &Image8, x0: usize, y0: usize, cfg: &FlowConfig) -> FlowVector {
    let n = cfg.patch_size;
    let r = cfg.search_radius as isize;
    let side = (2 * r + 1) as usize;
    let mut sads = vec![0u32; side * side];
    let mut best = (u32::MAX, 0isize, 0isize);
    for dy in -r..=r {
        for dx in -r..=r {
            let s = sad_integer(prev, cur, x0, y0, dx, dy, n);
            sads[((dy + r) as usize) * side + (dx + r) as usize] = s;
            // prefer the smaller displacement on ties, then raster order
            let better = s < best.0 || (s == best.0 && dx.abs() + dy.abs() < best.1.abs() + best.2.abs());
            if better {
                best = (s, dx, dy);
            }
        }
    }
    let (best_sad, bdx, bdy) = best;

    let mut second = u32::MAX;
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx - bdx).abs() <= 1 && (dy - bdy).abs() <= 1 {
                continue;
            }
            second = second.min(sads[((dy + r) as usize) * side + (dx + r) as usize]);
        }
    }
    let valid = second == u32::MAX || second - best_sad >= cfg.sad_margin();

    let mut sad4 = 4 * best_sad;
    let (mut hx_best, mut hy_best) = (0isize, 0isize);
    if cfg.enable_halfpixel {
        for hy in -1..=1isize {
            for hx in -1..=1isize {
                if hx == 0 && hy == 0 {
                    continue;
                }
                let s = sad_half(prev, cur, x0, y0, bdx, bdy, hx, hy, n);
                if s < sad4 {
                    sad4 = s;
                    hx_best = hx;
                    hy_best = hy;
                }
            }
        }
    }

    let half_center = |origin: usize, extent: usize| -> i32 { (2 * origin + n - 1) as i32 - extent as i32 };
    FlowVector {
        x_half: half_center(x0, prev.width()),
        y_half: half_center(y0, prev.height()),
        du_half: (2 * bdx + hx_best) as i16,
        dv_half: (2 * bdy + hy_best) as i16,
        sad: sad4,
        valid,
    }
}

/// Block flow for every grid point, in grid raster order.
pub fn block_flow(prev: &Image8, cur: &Image8, cfg: &FlowConfig) -> Result<Vec<FlowVector>> {
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(Error::DimensionMismatch(format!(
            "previous frame {}x{}, current frame {}x{}",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let origins = cfg.grid_origins(prev.width(), prev.height())?;
    Ok(origins
        .par_iter()
        .map(|&(x0, y0)| flow_at(prev, cur, x0, y0, cfg))
        .collect())
}

/// Histogram-mode flow as used by the original PX4FLOW pipeline.
///
/// Per axis, valid flows are binned at 0.5 px; the result is the mean of the
/// entries in the modal bin and its two neighbours. `(0, 0)` without valid flows.
pub fn dominant_flow(flows: &[FlowVector]) -> (f64, f64) {
    fn axis(values: &[i16]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        let mut counts = std::collections::BTreeMap::<i16, usize>::new();
        for &v in values {
            *counts.entry(v).or_default() += 1;
        }
        let (&mode, _) = counts
            .iter()
            .max_by(|(ka, na), (kb, nb)| na.cmp(nb).then(kb.abs().cmp(&ka.abs())).then(kb.cmp(ka)))
            .expect("non-empty");
        let (sum, count) = values
            .iter()
            .filter(|&&v| (v - mode).abs() <= 1)
            .fold((0i64, 0usize), |(s, c), &v| (s + v as i64, c + 1));
        sum as f64 / count as f64 / 2.0
    }
    let du: Vec<i16> = flows.iter().filter(|f| f.valid).map(|f| f.du_half).collect();
    let dv: Vec<i16> = flows.iter().filter(|f| f.valid).map(|f| f.dv_half).collect();
    (axis(&du), axis(&dv))
}

/// Frame-to-frame block flow tracker.
#[derive(Clone, Debug)]
pub struct FlowTracker {
    config: FlowConfig,
    previous: Option<Image8>,
}

impl FlowTracker {
    pub fn new(config: FlowConfig) -> Self {
        Self {
            config,
            previous: None,
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    /// Flow vectors from the previous frame to `img`; empty on the first frame.
    pub fn flows(&mut self, img: &Image8) -> Result<Vec<FlowVector>> {
        let flows = match &self.previous {
            Some(prev) => block_flow(prev, img, &self.config)?,
            None => {
                self.config.validate(img.width(), img.height())?;
                Vec::new()
            }
        };
        self.previous = Some(img.clone());
        Ok(flows)
    }

    pub fn track(&mut self, img: &Image8) -> Result<Vec<TrackedMatch>> {
        Ok(self
            .flows(img)?
            .iter()
            .filter(|f| f.valid)
            .map(FlowVector::to_match)
            .collect())
    }
}
