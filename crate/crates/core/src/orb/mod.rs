//! Fixed-point ORB: FAST-9 detection, integer Harris ranking, moment
//! orientation, Q7.8-steered BRIEF and brute-force Hamming matching.

mod describe;
mod fast;
mod harris;
mod matching;
pub mod pattern;
mod select;

pub use describe::{describe, intensity_moments, orientation, rotate_offset, to_q7_8, Orientation, MOMENT_RADIUS};
pub use fast::{fast_candidates, fast_detect, non_max_suppress, ARC_LENGTH, MIN_DETECT_SIZE, RING};
pub use harris::{
    harris_refine, harris_refine_with, harris_response, harris_score_at, structure_tensor_q, structure_tensor_raw,
    Tensor16, HARRIS_WINDOW_RADIUS, K_NUMERATOR, K_SHIFT, TENSOR_SHIFT,
};
pub use matching::{match_hamming, match_hamming_gated, MAX_HAMMING};
pub use select::{select_features, DetectorThresholds, ThresholdStep};

use rayon::prelude::*;

use crate::error::Result;
use crate::imgproc::{gaussian_blur5, sobel3, Image8};
use crate::rigid::TrackedMatch;

/// Keypoints stay this far from every frame edge so the rotated sampling
/// pattern (radius up to ~18.4 px) never leaves the frame.
pub const EDGE_MARGIN: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Corner {
    pub x: u32,
    pub y: u32,
    pub fast_score: u16,
    pub harris_score: i32,
}

/// 256-bit binary descriptor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Descriptor256(pub [u64; 4]);

impl Descriptor256 {
    #[inline]
    pub fn bit(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }

    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbFeature {
    pub x: u32,
    pub y: u32,
    pub angle: f64,
    pub descriptor: Descriptor256,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbConfig {
    pub thresholds: DetectorThresholds,
    pub max_hamming: u32,
    /// Largest trackable displacement in pixels; `None` disables the gate.
    pub max_displacement: Option<f64>,
}

impl Default for OrbConfig {
    fn default() -> Self {
        Self {
            thresholds: DetectorThresholds::default(),
            max_hamming: MAX_HAMMING,
            max_displacement: Some(32.0),
        }
    }
}

/// Detect, rank and describe features in one frame. Returns the features and
/// the thresholds to use on the next frame.
pub fn detect_and_describe(img: &Image8, thresholds: DetectorThresholds) -> Result<(Vec<OrbFeature>, DetectorThresholds)> {
    let candidates = fast_detect(img, thresholds.fast_threshold)?;
    let grad = sobel3(img)?;
    let scored = harris_refine_with(&grad, &candidates);
    let (selected, next) = select_features(scored, thresholds);
    let blurred = gaussian_blur5(img)?;
    let features = selected
        .par_iter()
        .map(|c| {
            let angle = orientation(&blurred, c).angle;
            OrbFeature {
                x: c.x,
                y: c.y,
                angle,
                descriptor: describe(&blurred, c, angle),
            }
        })
        .collect();
    Ok((features, next))
}

/// Frame-to-frame ORB tracker holding the previous frame's features and the
/// hysteresis state.
#[derive(Clone, Debug)]
pub struct OrbTracker {
    config: OrbConfig,
    thresholds: DetectorThresholds,
    previous: Option<Vec<OrbFeature>>,
}

impl OrbTracker {
    pub fn new(config: OrbConfig) -> Result<Self> {
        config.thresholds.validate()?;
        Ok(Self {
            config,
            thresholds: config.thresholds,
            previous: None,
        })
    }

    pub fn thresholds(&self) -> DetectorThresholds {
        self.thresholds
    }

    pub fn feature_count(&self) -> usize {
        self.previous.as_ref().map_or(0, Vec::len)
    }

    /// Process a frame; the first call yields no matches.
    pub fn track(&mut self, img: &Image8) -> Result<Vec<TrackedMatch>> {
        let (features, next) = detect_and_describe(img, self.thresholds)?;
        self.thresholds = next;
        let center = (img.width() as f64 / 2.0, img.height() as f64 / 2.0);
        let matches = match &self.previous {
            Some(prev) => match_hamming_gated(
                prev,
                &features,
                center,
                self.config.max_hamming,
                self.config.max_displacement,
            ),
            None => Vec::new(),
        };
        self.previous = Some(features);
        Ok(matches)
    }
}
