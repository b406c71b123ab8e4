//! Post-processing of SuperPoint network outputs: keypoint decoding from the
//! cell heatmap, bilinear descriptor sampling, and cosine-similarity matching.
//!
//! Tensors are stored channel-major as `[channels, rows, cols]` over the
//! 8x8-pixel cell grid (`15 x 20` cells for a 160x120 frame).
//!
//! # File format
//!
//! Little-endian: magic `SPT1`, three `u32` dims, `f64` scale, `i32` zero
//! point, then the row-major 8-bit payload. Heatmaps hold unsigned bytes,
//! descriptors signed bytes; a value dequantizes as `scale * (q - zero_point)`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rigid::TrackedMatch;

pub const CELL: usize = 8;
pub const HEAT_CHANNELS: usize = 64;
pub const DESC_DIM: usize = 256;
pub const MAGIC: &[u8; 4] = b"SPT1";

/// An 8-bit quantized tensor with `[channels, rows, cols]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct QTensor {
    pub dims: [usize; 3],
    pub scale: f64,
    pub zero_point: i32,
    pub data: Vec<u8>,
}

impl QTensor {
    pub fn new(dims: [usize; 3], scale: f64, zero_point: i32, data: Vec<u8>) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {len} bytes, got {}",
                data.len()
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::ShapeMismatch(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            dims,
            scale,
            zero_point,
            data,
        })
    }

    #[inline]
    fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.dims[1] + i) * self.dims[2] + j
    }

    #[inline]
    pub fn raw_u8(&self, c: usize, i: usize, j: usize) -> u8 {
        self.data[self.index(c, i, j)]
    }

    #[inline]
    pub fn raw_i8(&self, c: usize, i: usize, j: usize) -> i8 {
        self.data[self.index(c, i, j)] as i8
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::malformed(path, 0, msg))
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        const HEADER: usize = 4 + 12 + 8 + 4;
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return Err("missing SPT1 header".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let dims = [u32_at(4), u32_at(8), u32_at(12)];
        let scale = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let zero_point = i32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes"));
        let payload = &bytes[HEADER..];
        Self::new(dims, scale, zero_point, payload.to_vec()).map_err(|e| e.to_string())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.data.len());
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.scale.to_le_bytes());
        out.extend_from_slice(&self.zero_point.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Heatmap and descriptor tensors produced for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SpOutput {
    pub heatmap: QTensor,
    pub descriptors: QTensor,
}

impl SpOutput {
    /// Validate shapes. A 65th (dustbin) heatmap channel is accepted and ignored.
    pub fn new(heatmap: QTensor, descriptors: QTensor) -> Result<Self> {
        let [hc, hr, hw] = heatmap.dims;
        let [dc, dr, dw] = descriptors.dims;
        if hc != HEAT_CHANNELS && hc != HEAT_CHANNELS + 1 {
            return Err(Error::ShapeMismatch(format!("heatmap has {hc} channels, expected 64 or 65")));
        }
        if dc != DESC_DIM {
            return Err(Error::ShapeMismatch(format!("descriptor tensor has {dc} channels, expected 256")));
        }
        if (hr, hw) != (dr, dw) || hr == 0 || hw == 0 {
            return Err(Error::ShapeMismatch(format!(
                "heatmap grid {hr}x{hw} and descriptor grid {dr}x{dw} differ"
            )));
        }
        Ok(Self {
            heatmap,
            descriptors,
        })
    }

    /// Cell grid as `(rows, cols)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.heatmap.dims[1], self.heatmap.dims[2])
    }

    /// Frame size in pixels covered by the cell grid.
    pub fn frame_size(&self) -> (usize, usize) {
        let (rows, cols) = self.grid();
        (cols * CELL, rows * CELL)
    }

    /// Dequantized heatmap scores for the 64 location channels, `[c][i][j]` flattened.
    pub fn scores(&self) -> Vec<f64> {
        let (rows, cols) = self.grid();
        let h = &self.heatmap;
        (0..HEAT_CHANNELS * rows * cols)
            .map(|k| h.scale * (h.data[k] as i32 - h.zero_point) as f64)
            .collect()
    }

    pub fn expect_frame(&self, width: usize, height: usize) -> Result<()> {
        if self.frame_size() != (width, height) {
            return Err(Error::ShapeMismatch(format!(
                "tensor grid covers {:?}, frame is {width}x{height}",
                self.frame_size()
            )));
        }
        Ok(())
    }
}

/// Paths of the tensor pair for a frame index inside a `spout/` directory.
pub fn tensor_paths(dir: &Path, frame: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{frame:010}.heat.spt")),
        dir.join(format!("{frame:010}.desc.spt")),
    )
}

pub fn load_output(dir: &Path, frame: usize) -> Result<SpOutput> {
    let (heat, desc) = tensor_paths(dir, frame);
    for p in [&heat, &desc] {
        if !p.is_file() {
            return Err(Error::MissingInput(format!("superpoint tensor {}", p.display())));
        }
    }
    SpOutput::new(QTensor::read(&heat)?, QTensor::read(&desc)?)
}

pub fn save_output(dir: &Path, frame: usize, out: &SpOutput) -> Result<()> {
    let (heat, desc) = tensor_paths(dir, frame);
    out.heatmap.write(&heat)?;
    out.descriptors.write(&desc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

/// Pixel position of channel `c` in cell `(i, j)`.
#[inline]
pub fn cell_to_pixel(i: usize, j: usize, c: usize) -> (u32, u32) {
    ((CELL * j + c % CELL) as u32, (CELL * i + c / CELL) as u32)
}

/// Inverse of [`cell_to_pixel`].
#[inline]
pub fn pixel_to_cell(x: u32, y: u32) -> (usize, usize, usize) {
    let (x, y) = (x as usize, y as usize);
    (y / CELL, x / CELL, (y % CELL) * CELL + x % CELL)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpConfig {
    pub score_threshold: f64,
    pub nms_radius: f64,
    pub max_keypoints: usize,
    pub min_similarity: f64,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.015,
            nms_radius: 4.0,
            max_keypoints: 512,
            min_similarity: 0.75,
        }
    }
}

/// Decode keypoints from flattened `[64][rows][cols]` scores: threshold,
/// greedy radius suppression, best first, capped at `max_keypoints`.
pub fn decode_scores(
    scores: &[f64],
    grid: (usize, usize),
    score_threshold: f64,
    nms_radius: f64,
    max_keypoints: usize,
) -> Vec<Keypoint> {
    let (rows, cols) = grid;
    let mut cands: Vec<Keypoint> = Vec::new();
    for c in 0..HEAT_CHANNELS {
        for i in 0..rows {
            for j in 0..cols {
                let s = scores[(c * rows + i) * cols + j];
                if s >= score_threshold {
                    let (x, y) = cell_to_pixel(i, j, c);
                    cands.push(Keypoint { x, y, score: s });
                }
            }
        }
    }
    cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    let r2 = nms_radius * nms_radius;
    let mut kept: Vec<Keypoint> = Vec::new();
    for k in cands {
        if kept.len() >= max_keypoints {
            break;
        }
        let suppressed = kept.iter().any(|q| {
            let dx = q.x as f64 - k.x as f64;
            let dy = q.y as f64 - k.y as f64;
            dx * dx + dy * dy <= r2
        });
        if !suppressed {
            kept.push(k);
        }
    }
    kept
}

pub fn decode_keypoints(out: &SpOutput, score_threshold: f64, nms_radius: f64) -> Vec<Keypoint> {
    decode_scores(
        &out.scores(),
        out.grid(),
        score_threshold,
        nms_radius,
        SpConfig::default().max_keypoints,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpFeature {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// Zero-point-centered quantized descriptor.
    pub descriptor: [i8; DESC_DIM],
}

/// Bilinear corner weights at cell-grid coordinate `(gx, gy)`, clamped to the grid.
pub fn grid_weights(gx: f64, gy: f64, grid: (usize, usize)) -> [(usize, usize, f64); 4] {
    let (rows, cols) = grid;
    let gx = gx.clamp(0.0, (cols - 1) as f64);
    let gy = gy.clamp(0.0, (rows - 1) as f64);
    let j0 = gx.floor() as usize;
    let i0 = gy.floor() as usize;
    let j1 = (j0 + 1).min(cols - 1);
    let i1 = (i0 + 1).min(rows - 1);
    let fx = gx - j0 as f64;
    let fy = gy - i0 as f64;
    [
        (i0, j0, (1.0 - fx) * (1.0 - fy)),
        (i0, j1, fx * (1.0 - fy)),
        (i1, j0, (1.0 - fx) * fy),
        (i1, j1, fx * fy),
    ]
}

/// Interpolate the descriptor grid at each keypoint (grid coordinate
/// `(x/8 - 0.5, y/8 - 0.5)`), re-quantized to signed 8-bit.
pub fn sample_descriptors(out: &SpOutput, keypoints: &[Keypoint]) -> Vec<SpFeature> {
    let d = &out.descriptors;
    let grid = out.grid();
    keypoints
        .par_iter()
        .map(|k| {
            let gx = k.x as f64 / CELL as f64 - 0.5;
            let gy = k.y as f64 / CELL as f64 - 0.5;
            let weights = grid_weights(gx, gy, grid);
            let mut descriptor = [0i8; DESC_DIM];
            for (ch, slot) in descriptor.iter_mut().enumerate() {
                let v: f64 = weights
                    .iter()
                    .map(|&(i, j, w)| w * (d.raw_i8(ch, i, j) as i32 - d.zero_point) as f64)
                    .sum();
                *slot = v.round().clamp(-128.0, 127.0) as i8;
            }
            SpFeature {
                x: k.x as f64,
                y: k.y as f64,
                score: k.score,
                descriptor,
            }
        })
        .collect()
}

/// Cosine similarity of two quantized descriptors; `None` if either has zero norm.
pub fn cosine_similarity(a: &[i8; DESC_DIM], b: &[i8; DESC_DIM]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0i64, 0i64, 0i64);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x as i64, y as i64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0 || nb == 0 {
        None
    } else {
        Some(dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt()))
    }
}

/// Mutual nearest neighbours under cosine similarity, kept when the
/// similarity reaches `min_similarity`.
pub fn match_cosine(prev: &[SpFeature], cur: &[SpFeature], min_similarity: f64, center: (f64, f64)) -> Vec<TrackedMatch> {
    if prev.is_empty() || cur.is_empty() {
        return Vec::new();
    }
    let sims: Vec<Vec<Option<f64>>> = cur
        .par_iter()
        .map(|c| prev.iter().map(|p| cosine_similarity(&c.descriptor, &p.descriptor)).collect())
        .collect();
    let pos_key = |f: &SpFeature| (f.y, f.x);
    let better = |s: f64, f: &SpFeature, best: Option<(f64, usize)>, list: &[SpFeature]| match best {
        None => true,
        Some((bs, bi)) => {
            s > bs || (s == bs && pos_key(f).partial_cmp(&pos_key(&list[bi])) == Some(std::cmp::Ordering::Less))
        }
    };

    let mut best_prev: Vec<Option<(f64, usize)>> = vec![None; cur.len()];
    let mut best_cur: Vec<Option<(f64, usize)>> = vec![None; prev.len()];
    for (ci, row) in sims.iter().enumerate() {
        for (pi, s) in row.iter().enumerate() {
            let Some(s) = *s else { continue };
            if better(s, &prev[pi], best_prev[ci], prev) {
                best_prev[ci] = Some((s, pi));
            }
            if better(s, &cur[ci], best_cur[pi], cur) {
                best_cur[pi] = Some((s, ci));
            }
        }
    }
    best_prev
        .iter()
        .enumerate()
        .filter_map(|(ci, b)| {
            let (s, pi) = (*b)?;
            (s >= min_similarity && best_cur[pi].map(|(_, c)| c) == Some(ci)).then(|| TrackedMatch {
                px: prev[pi].x - center.0,
                py: prev[pi].y - center.1,
                cx: cur[ci].x - center.0,
                cy: cur[ci].y - center.1,
            })
        })
        .collect()
}

/// Frame-to-frame tracker over per-frame network outputs.
#[derive(Clone, Debug)]
pub struct SuperPointTracker {
    config: SpConfig,
    previous: Option<Vec<SpFeature>>,
}

impl SuperPointTracker {
    pub fn new(config: SpConfig) -> Self {
        Self {
            config,
            previous: None,
        }
    }

    pub fn track(&mut self, out: &SpOutput) -> Vec<TrackedMatch> {
        let c = self.config;
        let keypoints = decode_scores(&out.scores(), out.grid(), c.score_threshold, c.nms_radius, c.max_keypoints);
        let features = sample_descriptors(out, &keypoints);
        let (w, h) = out.frame_size();
        let center = (w as f64 / 2.0, h as f64 / 2.0);
        let matches = match &self.previous {
            Some(prev) => match_cosine(prev, &features, c.min_similarity, center),
            None => Vec::new(),
        };
        self.previous = Some(features);
        matches
    }
}
