//! FAST-9 segment test on the 16-pixel Bresenham circle of radius 3.

use rayon::prelude::*;

use super::{Corner, EDGE_MARGIN};
use crate::error::Result;
use crate::imgproc::Image8;

/// Circle offsets, clockwise starting straight above the center.
pub const RING: [(isize, isize); 16] = [
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

/// Smallest frame edge accepted by [`fast_detect`].
pub const MIN_DETECT_SIZE: usize = 32;

/// Minimum contiguous arc length.
pub const ARC_LENGTH: u32 = 9;

/// Longest circular run of set bits in a 16-bit ring mask, as `(start, len)`.
fn longest_run(mask: u16) -> Option<(usize, usize)> {
    if mask == 0 {
        return None;
    }
    if mask == u16::MAX {
        return Some((0, 16));
    }
    // Start scanning right after a clear bit so no run wraps past the start.
    let first_clear = (0..16).find(|&i| mask & (1 << i) == 0).unwrap_or(0);
    let mut best = (0, 0);
    let mut run_start = 0;
    let mut run_len = 0;
    for step in 1..=16 {
        let i = (first_clear + step) % 16;
        if mask & (1 << i) != 0 {
            if run_len == 0 {
                run_start = i;
            }
            run_len += 1;
            if run_len > best.1 {
                best = (run_start, run_len);
            }
        } else {
            run_len = 0;
        }
    }
    Some(best)
}

/// Segment test at a single pixel. The caller guarantees the ring is inside the frame.
#[inline]
fn segment_test(img: &Image8, x: usize, y: usize, threshold: u8) -> Option<u16> {
    let w = img.width() as isize;
    let data = img.data();
    let center_idx = y as isize * w + x as isize;
    let c = data[center_idx as usize] as i16;
    let hi = c + threshold as i16;
    let lo = c - threshold as i16;
    let ring_px = |k: usize| data[(center_idx + RING[k].1 * w + RING[k].0) as usize] as i16;

    // An arc of nine must cover at least two of the four compass pixels.
    let compass = [ring_px(0), ring_px(4), ring_px(8), ring_px(12)];
    let bright_compass = compass.iter().filter(|&&p| p > hi).count();
    let dark_compass = compass.iter().filter(|&&p| p < lo).count();
    if bright_compass < 2 && dark_compass < 2 {
        return None;
    }

    let mut values = [0i16; 16];
    let mut bright = 0u16;
    let mut dark = 0u16;
    for (k, v) in values.iter_mut().enumerate() {
        *v = ring_px(k);
        if *v > hi {
            bright |= 1 << k;
        } else if *v < lo {
            dark |= 1 << k;
        }
    }

    for mask in [bright, dark] {
        if mask.count_ones() < ARC_LENGTH {
            continue;
        }
        if let Some((start, len)) = longest_run(mask) {
            if len as u32 >= ARC_LENGTH {
                let score: u16 = (0..len)
                    .map(|i| (values[(start + i) % 16] - c).unsigned_abs())
                    .sum();
                return Some(score);
            }
        }
    }
    None
}

/// All pixels passing the segment test, before non-maximum suppression,
/// scanning `margin <= x < width - margin` (same for y). `margin` is raised
/// to 3 if smaller so the ring stays inside the frame.
pub fn fast_candidates(img: &Image8, threshold: u8, margin: usize) -> Vec<Corner> {
    let margin = margin.max(3);
    let (w, h) = (img.width(), img.height());
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    (margin..h - margin)
        .into_par_iter()
        .flat_map_iter(|y| {
            (margin..w - margin).filter_map(move |x| {
                segment_test(img, x, y, threshold).map(|score| Corner {
                    x: x as u32,
                    y: y as u32,
                    fast_score: score,
                    harris_score: 0,
                })
            })
        })
        .collect()
}

/// FAST-9 corners with 3x3 non-maximum suppression on the FAST score.
///
/// Only corners whose full descriptor footprint fits in the frame are
/// reported. Equal scores inside a window keep the first in raster order.
pub fn fast_detect(img: &Image8, threshold: u8) -> Result<Vec<Corner>> {
    img.require_at_least(MIN_DETECT_SIZE, MIN_DETECT_SIZE)?;
    let candidates = fast_candidates(img, threshold, EDGE_MARGIN);
    Ok(non_max_suppress(img.width(), img.height(), &candidates))
}

/// 3x3 non-maximum suppression over a raster-ordered candidate list.
pub fn non_max_suppress(width: usize, height: usize, candidates: &[Corner]) -> Vec<Corner> {
    let mut score_map = vec![0u16; width * height];
    let mut present = vec![false; width * height];
    for c in candidates {
        let idx = c.y as usize * width + c.x as usize;
        score_map[idx] = c.fast_score;
        present[idx] = true;
    }
    candidates
        .iter()
        .filter(|c| {
            let (cx, cy) = (c.x as isize, c.y as isize);
            let own = cy * width as isize + cx;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let idx = ny * width as isize + nx;
                    if !present[idx as usize] {
                        continue;
                    }
                    let other = score_map[idx as usize];
                    if other > c.fast_score || (other == c.fast_score && idx < own) {
                        return false;
                    }
                }
            }
            true
        })
        .copied()
        .collect()
}
