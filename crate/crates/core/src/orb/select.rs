//! Harris-threshold culling, ranking and per-frame threshold hysteresis.

use super::Corner;

/// Detector thresholds plus the hysteresis that keeps the feature count in
/// a target band from frame to frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorThresholds {
    pub fast_threshold: u8,
    pub harris_threshold: i32,
    pub target_min: usize,
    pub target_max: usize,
    pub hard_cap: usize,
    pub fast_bounds: (u8, u8),
    pub fast_step: u8,
    pub harris_bounds: (i32, i32),
    /// Multiplicative step applied to the Harris threshold.
    pub harris_factor: i32,
}

impl Default for DetectorThresholds {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            harris_threshold: 1 << 14,
            target_min: 150,
            target_max: 200,
            hard_cap: 512,
            fast_bounds: (10, 60),
            fast_step: 5,
            harris_bounds: (1 << 10, 1 << 20),
            harris_factor: 2,
        }
    }
}

/// Which way the hysteresis moved the thresholds after a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdStep {
    Raised,
    Lowered,
    Held,
}

impl DetectorThresholds {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.target_min < self.target_max
            && self.target_max <= self.hard_cap
            && self.fast_bounds.0 <= self.fast_bounds.1
            && self.harris_bounds.0 <= self.harris_bounds.1
            && self.harris_bounds.0 > 0
            && self.harris_factor >= 1;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("inconsistent detector thresholds: {self:?}")))
        }
    }

    fn raised(mut self) -> Self {
        self.fast_threshold = self
            .fast_threshold
            .saturating_add(self.fast_step)
            .clamp(self.fast_bounds.0, self.fast_bounds.1);
        self.harris_threshold = self
            .harris_threshold
            .saturating_mul(self.harris_factor)
            .clamp(self.harris_bounds.0, self.harris_bounds.1);
        self
    }

    fn lowered(mut self) -> Self {
        self.fast_threshold = self
            .fast_threshold
            .saturating_sub(self.fast_step)
            .clamp(self.fast_bounds.0, self.fast_bounds.1);
        self.harris_threshold =
            (self.harris_threshold / self.harris_factor).clamp(self.harris_bounds.0, self.harris_bounds.1);
        self
    }

    /// Next-frame thresholds for a frame that produced `survivors` corners.
    pub fn step(self, survivors: usize) -> (Self, ThresholdStep) {
        if survivors > self.target_max {
            (self.raised(), ThresholdStep::Raised)
        } else if survivors < self.target_min {
            (self.lowered(), ThresholdStep::Lowered)
        } else {
            (self, ThresholdStep::Held)
        }
    }
}

/// Keep corners at or above the Harris threshold, best first, capped at
/// `hard_cap`, and return the thresholds to use on the next frame.
pub fn select_features(mut corners: Vec<Corner>, thresholds: DetectorThresholds) -> (Vec<Corner>, DetectorThresholds) {
    corners.retain(|c| c.harris_score >= thresholds.harris_threshold);
    corners.sort_by(|a, b| {
        b.harris_score
            .cmp(&a.harris_score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    let (next, _) = thresholds.step(corners.len());
    corners.truncate(thresholds.hard_cap);
    (corners, next)
}
