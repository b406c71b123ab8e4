//! Integer Harris corner response on a 7x7 window.
//!
//! Structure tensor sums are exact in 32 bits, then scaled by 2^-11 into
//! 16-bit entries so the response `det - k * trace^2` fits a signed 32-bit
//! integer. `k = 41/1024 ≈ 0.04`.

use rayon::prelude::*;

use super::Corner;
use crate::error::Result;
use crate::imgproc::{sobel3, GradientPair, Image8};

pub const HARRIS_WINDOW_RADIUS: usize = 3;
pub const TENSOR_SHIFT: u32 = 11;
pub const K_NUMERATOR: i64 = 41;
pub const K_SHIFT: u32 = 10;

/// Quantized structure tensor `[a b; b c]` around a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor16 {
    pub a: i16,
    pub b: i16,
    pub c: i16,
}

#[inline]
fn round_shift_i32(v: i32, shift: u32) -> i32 {
    (v + (1 << (shift - 1))) >> shift
}

/// Exact 32-bit structure tensor sums over the 7x7 window.
pub fn structure_tensor_raw(grad: &GradientPair, x: usize, y: usize) -> (i32, i32, i32) {
    let (mut sxx, mut sxy, mut syy) = (0i32, 0i32, 0i32);
    for yy in y - HARRIS_WINDOW_RADIUS..=y + HARRIS_WINDOW_RADIUS {
        let row = yy * grad.width;
        for xx in x - HARRIS_WINDOW_RADIUS..=x + HARRIS_WINDOW_RADIUS {
            let gx = grad.ix[row + xx] as i32;
            let gy = grad.iy[row + xx] as i32;
            sxx += gx * gx;
            sxy += gx * gy;
            syy += gy * gy;
        }
    }
    (sxx, sxy, syy)
}

pub fn structure_tensor_q(grad: &GradientPair, x: usize, y: usize) -> Tensor16 {
    let (sxx, sxy, syy) = structure_tensor_raw(grad, x, y);
    Tensor16 {
        a: round_shift_i32(sxx, TENSOR_SHIFT) as i16,
        b: round_shift_i32(sxy, TENSOR_SHIFT) as i16,
        c: round_shift_i32(syy, TENSOR_SHIFT) as i16,
    }
}

/// Harris response from a quantized tensor.
pub fn harris_response(m: Tensor16) -> i32 {
    let (a, b, c) = (m.a as i64, m.b as i64, m.c as i64);
    let det = a * c - b * b;
    let trace = a + c;
    let k_trace2 = (K_NUMERATOR * trace * trace + (1 << (K_SHIFT - 1))) >> K_SHIFT;
    // |R| is bounded by ~5.2e8 for 8-bit input, well inside i32.
    (det - k_trace2) as i32
}

/// Harris score at one pixel; the 7x7 window must lie inside the gradient border.
pub fn harris_score_at(grad: &GradientPair, x: usize, y: usize) -> i32 {
    harris_response(structure_tensor_q(grad, x, y))
}

/// Fill `harris_score` for each corner.
pub fn harris_refine(img: &Image8, corners: &[Corner]) -> Result<Vec<Corner>> {
    let grad = sobel3(img)?;
    Ok(harris_refine_with(&grad, corners))
}

pub fn harris_refine_with(grad: &GradientPair, corners: &[Corner]) -> Vec<Corner> {
    let limit = HARRIS_WINDOW_RADIUS + 1;
    corners
        .par_iter()
        .map(|c| {
            let (x, y) = (c.x as usize, c.y as usize);
            debug_assert!(x >= limit && y >= limit && x + limit < grad.width && y + limit < grad.height);
            Corner {
                harris_score: harris_score_at(grad, x, y),
                ..*c
            }
        })
        .collect()
}
