//! Dense cue ingestion, in-box aggregation, temporal smoothing and feature
//! vector assembly.

mod aggregate;
mod features;
mod formats;
mod smooth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::aggregate_in_box;
pub use features::{assemble_features, feature_len, sampled_frames, FeatureRecord, FeatureVector, FlowField};
pub use formats::{
    decode_flo, decode_pfm, encode_flo, encode_pfm, load_disparity_map, load_flow_field,
    save_disparity_map, save_flow_field,
};
pub use smooth::{gaussian_kernel, gaussian_smooth, smooth_values};

/// Row-major scalar map: disparity, or one flow component in pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DenseMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("map dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "map has {} values for {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("map values must be finite"));
        }
        Ok(DenseMap { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Bilinear sample in cell-index coordinates (cell `i` at `i`), clamped.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let g = |x, y| self.get(x, y) as f64;
        (1.0 - ay) * ((1.0 - ax) * g(x0, y0) + ax * g(x1, y0)) + ay * ((1.0 - ax) * g(x0, y1) + ax * g(x1, y1))
    }
}

/// Cue channel carried by a [`CueSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueChannel {
    U,
    V,
    Depth,
}

/// Per-frame values of one cue along one track.
#[derive(Debug, Clone, PartialEq)]
pub struct CueSeries {
    pub channel: CueChannel,
    pub values: Vec<f64>,
}

/// Feature extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub frame_skip: usize,
    pub shrink_fraction: f64,
    /// Temporal kernel length (odd).
    pub gaussian_taps: usize,
    pub gaussian_sigma: f64,
    pub include_depth: bool,
    pub include_flow: bool,
    /// Video width in pixels; normalizes box features and maps boxes onto cue maps.
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_skip: 5,
            shrink_fraction: 0.1,
            gaussian_taps: 5,
            gaussian_sigma: 1.0,
            include_depth: false,
            include_flow: false,
            image_width: 1280.0,
            image_height: 720.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_skip == 0 {
            return Err(Error::invalid("frame_skip must be at least 1"));
        }
        if self.gaussian_taps % 2 == 0 {
            return Err(Error::invalid("gaussian_taps must be odd"));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(Error::invalid("gaussian_sigma must be positive"));
        }
        if !(0.0..1.0).contains(&self.shrink_fraction) {
            return Err(Error::invalid("shrink_fraction must lie in [0,1)"));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(())
    }
}
