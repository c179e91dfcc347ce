use serde::{Deserialize, Serialize};

use super::median_flow::median_flow_step_pyr;
use super::ncc::ncc_fallback_step;
use super::pyramid::build_pyramid;
use super::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, VideoSequence};

/// How the box of a frame was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSource {
    #[serde(rename = "mf")]
    MedianFlow,
    #[serde(rename = "fb")]
    Fallback,
}

/// One box per frame, anchored at the last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub boxes: Vec<BoundingBox>,
    pub sources: Vec<FrameSource>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn fallback_frames(&self) -> Vec<usize> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == FrameSource::Fallback)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn last_box(&self) -> &BoundingBox {
        self.boxes.last().expect("track is never empty")
    }
}

/// Tracks a vehicle from its last-frame box back to the first frame.
///
/// Each frame pair `(t, t-1)` is tried with Median Flow first; on failure the
/// NCC template step substitutes, keeping the box size, and Median Flow
/// resumes from the substituted box on the next pair.
pub fn track_vehicle(seq: &VideoSequence, last_box: &BoundingBox, cfg: &TrackerConfig) -> Result<Track> {
    cfg.validate()?;
    last_box.validate()?;
    let (w, h) = seq.dims();
    if !last_box.overlaps_frame(w, h) {
        return Err(Error::invalid(format!("box {last_box:?} does not overlap the last frame")));
    }
    let n = seq.len();
    let mut boxes = vec![*last_box; n];
    let mut sources = vec![FrameSource::MedianFlow; n];

    let mut prev_pyr = build_pyramid(&seq.frames[n - 1], cfg.pyramid_levels)?;
    for t in (1..n).rev() {
        let next_pyr = build_pyramid(&seq.frames[t - 1], cfg.pyramid_levels)?;
        let current = boxes[t];
        let tracked = if current.overlaps_frame(w, h) {
            median_flow_step_pyr(&prev_pyr, &next_pyr, &current, cfg)?.bbox()
        } else {
            None
        };
        match tracked {
            Some(b) => boxes[t - 1] = b,
            None => {
                let fb = ncc_fallback_step(&seq.frames[t], &seq.frames[t - 1], &current, cfg)?;
                boxes[t - 1] = fb.bbox;
                sources[t - 1] = FrameSource::Fallback;
            }
        }
        prev_pyr = next_pyr;
    }
    Ok(Track { boxes, sources })
}

/// On-disk track file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub sequence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_id: Option<String>,
    pub boxes: Vec<[f64; 4]>,
    pub source: Vec<FrameSource>,
}

impl TrackFile {
    pub fn new(sequence_id: &str, vehicle_id: Option<String>, track: &Track) -> Self {
        TrackFile {
            sequence_id: sequence_id.to_string(),
            vehicle_id,
            boxes: track.boxes.iter().map(|b| [b.x, b.y, b.w, b.h]).collect(),
            source: track.sources.clone(),
        }
    }

    pub fn to_track(&self) -> Result<Track> {
        if self.boxes.len() != self.source.len() || self.boxes.is_empty() {
            return Err(Error::invalid("track file has mismatched or empty boxes/source"));
        }
        let boxes = self
            .boxes
            .iter()
            .map(|&[x, y, w, h]| BoundingBox::new(x, y, w, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Track {
            boxes,
            sources: self.source.clone(),
        })
    }
}
