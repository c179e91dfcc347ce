use serde::{Deserialize, Serialize};

use super::{aggregate_in_box, smooth_values, DenseMap, FeatureConfig};
use crate::error::{Error, Result};
use crate::tracker::Track;

/// Flow components `(u, v)` from frame `t` to frame `t + 1`.
pub type FlowField = (DenseMap, DenseMap);

const LAYOUT_REVISION: u32 = 1;

/// Temporally concatenated per-vehicle features.
///
/// For each sampled frame (the last one first, then stepping back by the
/// frame skip): `cx/W, cy/H, w/W, h/H`, then mean `u, v` when flow is
/// enabled, then mean disparity when depth is enabled. The last value is the
/// last-frame box area over `W·H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub layout_version: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Features file entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub vehicle_id: String,
    pub layout_version: String,
    pub values: Vec<f64>,
}

impl FeatureRecord {
    pub fn new(vehicle_id: impl Into<String>, fv: FeatureVector) -> Self {
        FeatureRecord {
            vehicle_id: vehicle_id.into(),
            layout_version: fv.layout_version,
            values: fv.values,
        }
    }

    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            layout_version: self.layout_version.clone(),
            values: self.values.clone(),
        }
    }
}

/// Frame indices sampled for a sequence of `frames` frames, last first.
pub fn sampled_frames(frames: usize, skip: usize) -> Vec<usize> {
    if frames == 0 || skip == 0 {
        return Vec::new();
    }
    (0..frames).rev().step_by(skip).collect()
}

pub fn feature_len(frames: usize, skip: usize, flow: bool, depth: bool) -> usize {
    let per_frame = 4 + if flow { 2 } else { 0 } + usize::from(depth);
    sampled_frames(frames, skip).len() * per_frame + 1
}

fn layout_version(frames: usize, cfg: &FeatureConfig) -> String {
    let mut s = format!("v{LAYOUT_REVISION}/n{frames}/skip{}/box4", cfg.frame_skip);
    if cfg.include_flow {
        s.push_str("+flow2");
    }
    if cfg.include_depth {
        s.push_str("+depth1");
    }
    s.push_str("/area1");
    s
}

/// Builds the feature vector of one track.
///
/// `flow` holds one field per consecutive frame pair; frame `t` uses the
/// field `t → t+1` and the last frame reuses the final field. `depth` holds
/// one map per frame. Cue series are Gaussian-smoothed over time before
/// sampling; box features are used as tracked.
pub fn assemble_features(
    track: &Track,
    flow: Option<&[FlowField]>,
    depth: Option<&[DenseMap]>,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    cfg.validate()?;
    let n = track.len();
    if n == 0 {
        return Err(Error::invalid("empty track"));
    }
    if flow.is_some() != cfg.include_flow || depth.is_some() != cfg.include_depth {
        return Err(Error::invalid("supplied cues do not match the enabled feature channels"));
    }
    let dims = (cfg.image_width, cfg.image_height);

    let flow_series = match flow {
        Some(fields) => {
            if n < 2 || fields.len() != n - 1 {
                return Err(Error::invalid(format!(
                    "expected {} flow fields for {n} frames, got {}",
                    n.saturating_sub(1),
                    fields.len()
                )));
            }
            let mut u = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for (t, b) in track.boxes.iter().enumerate() {
                let (fu, fv) = &fields[t.min(n - 2)];
                u.push(aggregate_in_box(fu, b, dims, cfg.shrink_fraction)?);
                v.push(aggregate_in_box(fv, b, dims, cfg.shrink_fraction)?);
            }
            Some((
                smooth_values(&u, cfg.gaussian_taps, cfg.gaussian_sigma)?,
                smooth_values(&v, cfg.gaussian_taps, cfg.gaussian_sigma)?,
            ))
        }
        None => None,
    };

    let depth_series = match depth {
        Some(maps) => {
            if maps.len() != n {
                return Err(Error::invalid(format!(
                    "expected {n} depth maps, got {}",
                    maps.len()
                )));
            }
            let d = track
                .boxes
                .iter()
                .zip(maps)
                .map(|(b, m)| aggregate_in_box(m, b, dims, cfg.shrink_fraction))
                .collect::<Result<Vec<_>>>()?;
            Some(smooth_values(&d, cfg.gaussian_taps, cfg.gaussian_sigma)?)
        }
        None => None,
    };

    let (w, h) = dims;
    let mut values = Vec::with_capacity(feature_len(n, cfg.frame_skip, flow.is_some(), depth.is_some()));
    for t in sampled_frames(n, cfg.frame_skip) {
        let b = &track.boxes[t];
        let (cx, cy) = b.center();
        values.extend_from_slice(&[cx / w, cy / h, b.w / w, b.h / h]);
        if let Some((u, v)) = &flow_series {
            values.push(u[t]);
            values.push(v[t]);
        }
        if let Some(d) = &depth_series {
            values.push(d[t]);
        }
    }
    values.push(track.last_box().area() / (w * h));

    Ok(FeatureVector {
        layout_version: layout_version(n, cfg),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::tracker::FrameSource;

    fn static_track(n: usize) -> Track {
        let b = BoundingBox::new(100.0, 200.0, 64.0, 48.0).unwrap();
        Track {
            boxes: vec![b; n],
            sources: vec![FrameSource::MedianFlow; n],
        }
    }

    fn cfg(flow: bool, depth: bool) -> FeatureConfig {
        FeatureConfig {
            include_flow: flow,
            include_depth: depth,
            ..Default::default()
        }
    }

    #[test]
    fn tracking_only_layout() {
        let fv = assemble_features(&static_track(40), None, None, &cfg(false, false)).unwrap();
        assert_eq!(fv.len(), 33);
        assert_eq!(fv.layout_version, "v1/n40/skip5/box4/area1");
        assert_eq!(&fv.values[0..4], &[132.0 / 1280.0, 224.0 / 720.0, 0.05, 48.0 / 720.0]);
        assert_eq!(fv.values[32], 64.0 * 48.0 / (1280.0 * 720.0));
        for k in 1..8 {
            assert_eq!(fv.values[4 * k..4 * k + 4], fv.values[0..4]);
        }
    }

    #[test]
    fn all_channels_layout() {
        let flow: Vec<FlowField> = (0..39)
            .map(|_| (DenseMap::filled(512, 256, 1.5).unwrap(), DenseMap::filled(512, 256, -0.5).unwrap()))
            .collect();
        let depth: Vec<DenseMap> = (0..40).map(|_| DenseMap::filled(512, 256, 0.2).unwrap()).collect();
        let fv = assemble_features(&static_track(40), Some(&flow), Some(&depth), &cfg(true, true)).unwrap();
        assert_eq!(fv.len(), 57);
        for k in 0..8 {
            let f = &fv.values[7 * k..7 * k + 7];
            assert!((f[4] - 1.5).abs() < 1e-12 && (f[5] + 0.5).abs() < 1e-12);
            assert!((f[6] - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn flow_attribution_uses_outgoing_field() {
        let flow: Vec<FlowField> = (0..4)
            .map(|t| (DenseMap::filled(8, 8, t as f32).unwrap(), DenseMap::filled(8, 8, 0.0).unwrap()))
            .collect();
        let c = FeatureConfig {
            frame_skip: 1,
            gaussian_taps: 1,
            ..cfg(true, false)
        };
        let fv = assemble_features(&static_track(5), Some(&flow), None, &c).unwrap();
        // sampled frames 4, 3, 2, 1, 0 -> fields 3, 3, 2, 1, 0
        let u: Vec<f64> = (0..5).map(|k| fv.values[6 * k + 4]).collect();
        assert_eq!(u, vec![3.0, 3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn cue_count_mismatch() {
        let depth: Vec<DenseMap> = (0..3).map(|_| DenseMap::filled(4, 4, 0.0).unwrap()).collect();
        assert!(assemble_features(&static_track(4), None, Some(&depth), &cfg(false, true)).is_err());
        assert!(assemble_features(&static_track(4), None, None, &cfg(false, true)).is_err());
        let one: Vec<FlowField> = vec![];
        assert!(assemble_features(&static_track(1), Some(&one), None, &cfg(true, false)).is_err());
    }

    #[test]
    fn sampling_anchored_at_last_frame() {
        assert_eq!(sampled_frames(40, 5), vec![39, 34, 29, 24, 19, 14, 9, 4]);
        assert_eq!(sampled_frames(1, 5), vec![0]);
        assert_eq!(sampled_frames(6, 5), vec![5, 0]);
    }
}
