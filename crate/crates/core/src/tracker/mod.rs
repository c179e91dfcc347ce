//! Backward-in-time Median Flow tracking with an NCC template fallback.

mod lk;
mod median_flow;
mod ncc;
mod pyramid;
mod track;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lk::{lk_track_point, LkResult};
pub use median_flow::{
    median_flow_step, median_flow_step_pyr, MedianFlowFailure, MedianFlowStep, PointTrack,
};
pub use ncc::{ncc_fallback_step, FallbackFlag, FallbackStep};
pub use pyramid::{build_pyramid, ImagePyramid};
pub use track::{track_vehicle, FrameSource, Track, TrackFile};

/// Median Flow and fallback parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Points per box side.
    pub grid: usize,
    pub pyramid_levels: usize,
    /// Side of the square LK window (odd).
    pub lk_window: usize,
    pub lk_max_iterations: usize,
    /// Iteration stops once the update is shorter than this (pixels).
    pub lk_epsilon: f64,
    /// Minimum eigenvalue of the window gradient matrix, per window pixel.
    pub lk_min_eigenvalue: f64,
    pub keep_fraction: f64,
    /// Median forward-backward error (pixels) above which a step fails.
    pub failure_fb_threshold: f64,
    pub ncc_search_radius: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            grid: 10,
            pyramid_levels: 3,
            lk_window: 11,
            lk_max_iterations: 20,
            lk_epsilon: 0.01,
            lk_min_eigenvalue: 1e-4,
            keep_fraction: 0.5,
            failure_fb_threshold: 10.0,
            ncc_search_radius: 16,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.grid > 0
            && self.pyramid_levels > 0
            && self.lk_window > 0
            && self.lk_max_iterations > 0
            && self.lk_epsilon > 0.0
            && self.lk_min_eigenvalue > 0.0
            && self.failure_fb_threshold > 0.0
            && self.ncc_search_radius > 0;
        if !positive {
            return Err(Error::invalid("tracker parameters must be positive"));
        }
        if self.lk_window % 2 == 0 {
            return Err(Error::invalid("lk_window must be odd"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid("keep_fraction must lie in (0,1]"));
        }
        Ok(())
    }
}

/// Median with even counts resolved to the mean of the two central values.
/// Sorts `values` in place.
pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn config_validation() {
        assert!(TrackerConfig::default().validate().is_ok());
        let even = TrackerConfig {
            lk_window: 10,
            ..Default::default()
        };
        assert!(even.validate().is_err());
        let keep = TrackerConfig {
            keep_fraction: 0.0,
            ..Default::default()
        };
        assert!(keep.validate().is_err());
    }
}
