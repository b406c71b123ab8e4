//! Keypoint orientation from intensity moments and steered BRIEF description
//! with a Q7.8 rotation of the sampling pattern.

use super::pattern::ORB_PATTERN;
use super::{Corner, Descriptor256};
use crate::imgproc::Image8;

/// Radius of the circular moment patch.
pub const MOMENT_RADIUS: i32 = 15;

/// Orientation of a keypoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orientation {
    /// Radians in `(-pi, pi]`.
    pub angle: f64,
    /// Both first-order moments were zero; `angle` is then 0.
    pub zero_moment: bool,
}

/// Half-widths of the circular patch per row offset `dy` in `-15..=15`.
fn circle_half_width(dy: i32) -> i32 {
    let r2 = MOMENT_RADIUS * MOMENT_RADIUS;
    let mut u = 0;
    while (u + 1) * (u + 1) + dy * dy <= r2 {
        u += 1;
    }
    u
}

/// Unnormalised first-order moments `(m10, m01)` over the circular patch.
pub fn intensity_moments(blurred: &Image8, c: &Corner) -> (i32, i32) {
    let (cx, cy) = (c.x as i32, c.y as i32);
    let (mut m10, mut m01) = (0i32, 0i32);
    for dy in -MOMENT_RADIUS..=MOMENT_RADIUS {
        let half = circle_half_width(dy);
        let row = blurred.row((cy + dy) as usize);
        for dx in -half..=half {
            let v = row[(cx + dx) as usize] as i32;
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    (m10, m01)
}

pub fn orientation(blurred: &Image8, c: &Corner) -> Orientation {
    let (m10, m01) = intensity_moments(blurred, c);
    if m10 == 0 && m01 == 0 {
        return Orientation {
            angle: 0.0,
            zero_moment: true,
        };
    }
    let mut angle = (m01 as f64).atan2(m10 as f64);
    if angle <= -std::f64::consts::PI {
        angle = std::f64::consts::PI;
    }
    Orientation {
        angle,
        zero_moment: false,
    }
}

/// Q7.8 quantisation, rounding half away from zero.
#[inline]
pub fn to_q7_8(v: f64) -> i32 {
    (v * 256.0).round() as i32
}

/// `n / 256` rounded half away from zero.
#[inline]
fn div256_round(n: i32) -> i32 {
    if n >= 0 {
        (n + 128) >> 8
    } else {
        -((-n + 128) >> 8)
    }
}

/// Rotate a pattern offset by the Q7.8 cosine/sine pair.
#[inline]
pub fn rotate_offset(x: i32, y: i32, cos_q: i32, sin_q: i32) -> (i32, i32) {
    (div256_round(x * cos_q - y * sin_q), div256_round(x * sin_q + y * cos_q))
}

/// Steered BRIEF descriptor: bit `k` is set iff `I(p_k) < I(q_k)`.
///
/// Callers keep keypoints at least [`super::EDGE_MARGIN`] pixels from the
/// frame edge so every rotated sample lands inside the image.
pub fn describe(blurred: &Image8, c: &Corner, angle: f64) -> Descriptor256 {
    let cos_q = to_q7_8(angle.cos());
    let sin_q = to_q7_8(angle.sin());
    let (cx, cy) = (c.x as i32, c.y as i32);
    let sample = |x: i32, y: i32| {
        let (rx, ry) = rotate_offset(x, y, cos_q, sin_q);
        blurred.get((cx + rx) as usize, (cy + ry) as usize)
    };
    let mut desc = Descriptor256::default();
    for (k, p) in ORB_PATTERN.iter().enumerate() {
        let a = sample(p[0] as i32, p[1] as i32);
        let b = sample(p[2] as i32, p[3] as i32);
        if a < b {
            desc.set_bit(k);
        }
    }
    desc
}
