use rayon::prelude::*;

use super::OrbFeature;
use crate::rigid::TrackedMatch;

/// Largest Hamming distance accepted as a match for 256-bit descriptors.
pub const MAX_HAMMING: u32 = 20;

/// Brute-force matching: every current feature takes the previous feature
/// with the smallest Hamming distance, kept when that distance is at most 20.
///
/// `center` is the image center used to express positions in center-origin
/// pixel coordinates.
pub fn match_hamming(prev: &[OrbFeature], cur: &[OrbFeature], center: (f64, f64)) -> Vec<TrackedMatch> {
    match_hamming_gated(prev, cur, center, MAX_HAMMING, None)
}

/// [`match_hamming`] with a configurable distance limit and an optional
/// pixel-displacement gate. The gate is checked on the winning pair only, so
/// the search itself costs the same for every gate.
pub fn match_hamming_gated(
    prev: &[OrbFeature],
    cur: &[OrbFeature],
    center: (f64, f64),
    max_hamming: u32,
    max_displacement: Option<f64>,
) -> Vec<TrackedMatch> {
    cur.par_iter()
        .filter_map(|c| {
            // deterministic tie-break on position keeps the match set order independent
            let p = prev
                .iter()
                .min_by_key(|p| (c.descriptor.hamming(&p.descriptor), p.y, p.x))?;
            if c.descriptor.hamming(&p.descriptor) > max_hamming {
                return None;
            }
            let dx = c.x as f64 - p.x as f64;
            let dy = c.y as f64 - p.y as f64;
            if max_displacement.is_some_and(|d| dx * dx + dy * dy > d * d) {
                return None;
            }
            Some(TrackedMatch {
                px: p.x as f64 - center.0,
                py: p.y as f64 - center.1,
                cx: c.x as f64 - center.0,
                cy: c.y as f64 - center.1,
            })
        })
        .collect()
}
