use serde::{Deserialize, Serialize};

use super::noise::fractal;
use super::{project_vehicle, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ImageFrame, VideoSequence};

/// Minimum difference between the mean intensity of a visible vehicle and
/// the background it covers.
pub const MIN_CONTRAST: f64 = 0.2;
/// Subsamples per pixel side for anti-aliased billboards.
const SUPERSAMPLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruth {
    /// Unclamped projected box of every frame.
    pub boxes: Vec<BoundingBox>,
    /// Last-frame `(lateral, longitudinal)` velocity, m/s.
    pub velocity: [f64; 2],
    /// Last-frame `(lateral, longitudinal)` position, m.
    pub position: [f64; 2],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub vehicles: Vec<VehicleTruth>,
}

/// Static value-noise background in `[0.1, 0.5]`; texture size scales with
/// the image width.
pub fn render_background(spec: &SceneSpec) -> ImageFrame {
    let (w, h) = (spec.width, spec.height);
    let scale = w as f64 / 640.0;
    let octaves = [(1.0 / 28.0, 0.5), (1.0 / 11.0, 0.3), (1.0 / 5.0, 0.2)];
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let n = fractal(spec.background_seed, x as f64 / scale, y as f64 / scale, &octaves);
            data.push((0.1 + 0.4 * n) as f32);
        }
    }
    ImageFrame::from_raw(w, h, data)
}

/// Vehicle intensity at billboard coordinates `(u, v) ∈ [0,1)²`: bright
/// noise with a darker rim.
fn vehicle_shade(seed: u64, u: f64, v: f64) -> f64 {
    let edge = u.min(1.0 - u).min(v).min(1.0 - v);
    if edge < 0.05 {
        return 0.6;
    }
    let n = fractal(seed, u, v, &[(6.0, 2.0), (14.0, 1.5), (30.0, 1.0)]);
    (0.75 + 1.2 * (n - 0.5)).clamp(0.45, 1.0)
}

/// Composites `shade` over the pixels covered by `b` with per-pixel coverage
/// from a regular subsample grid. Pixel `i` spans `[i - 0.5, i + 0.5)`.
fn draw(data: &mut [f32], w: usize, h: usize, b: &BoundingBox, shade: impl Fn(f64, f64) -> f64) {
    let clamp_x = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
    let clamp_y = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
    if b.right() < -0.5 || b.x > w as f64 - 0.5 || b.bottom() < -0.5 || b.y > h as f64 - 0.5 {
        return;
    }
    let (x0, x1) = (clamp_x((b.x + 0.5).floor()), clamp_x((b.right() + 0.5).ceil()));
    let (y0, y1) = (clamp_y((b.y + 0.5).floor()), clamp_y((b.bottom() + 0.5).ceil()));
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let (mut acc, mut covered) = (0.0, 0usize);
            for sy in 0..SUPERSAMPLE {
                let y = py as f64 - 0.5 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                if y < b.y || y >= b.bottom() {
                    continue;
                }
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 - 0.5 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    if x < b.x || x >= b.right() {
                        continue;
                    }
                    acc += shade((x - b.x) / b.w, (y - b.y) / b.h);
                    covered += 1;
                }
            }
            if covered > 0 {
                let p = &mut data[py * w + px];
                let blended = (acc + (n - covered as f64) * *p as f64) / n;
                *p = blended.clamp(0.0, 1.0) as f32;
            }
        }
    }
}

/// Mean over pixels lying entirely inside `b`; `None` if there are none.
fn box_mean(data: &[f32], w: usize, h: usize, b: &BoundingBox) -> Option<f64> {
    let lo_x = (b.x + 0.5).ceil().max(0.0) as usize;
    let lo_y = (b.y + 0.5).ceil().max(0.0) as usize;
    let hi_x = ((b.right() + 0.5).floor() as i64).min(w as i64);
    let hi_y = ((b.bottom() + 0.5).floor() as i64).min(h as i64);
    let (mut sum, mut n) = (0.0, 0usize);
    for y in lo_y as i64..hi_y {
        for x in lo_x as i64..hi_x {
            sum += data[y as usize * w + x as usize] as f64;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Renders every frame of `spec` and its exact ground truth. The returned
/// sequence is labelled `synthetic`; callers set their own ids.
pub fn render_sequence(spec: &SceneSpec) -> Result<(VideoSequence, SyntheticGroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = render_background(spec);

    let mut truth = Vec::with_capacity(spec.vehicles.len());
    for v in &spec.vehicles {
        let boxes = (0..spec.frames)
            .map(|t| project_vehicle(&v.state_at(t, spec.fps), &spec.intrinsics, spec.camera_height))
            .collect::<Result<Vec<_>>>()?;
        let last = v.state_at(spec.frames - 1, spec.fps);
        truth.push(VehicleTruth {
            boxes,
            velocity: [v.vx, v.vz],
            position: [last.x, last.z],
            distance: last.x.hypot(last.z),
        });
    }

    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut data = background.data().to_vec();
        // far to near so that nearer vehicles occlude
        let mut order: Vec<usize> = (0..spec.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            let za = spec.vehicles[a].state_at(t, spec.fps).z;
            let zb = spec.vehicles[b].state_at(t, spec.fps).z;
            zb.total_cmp(&za)
        });
        for &i in &order {
            let seed = spec.vehicles[i].texture_seed;
            draw(&mut data, w, h, &truth[i].boxes[t], |u, v| vehicle_shade(seed, u, v));
        }
        let occluded = match &spec.occluder {
            Some(o) if (o.start_frame..o.end_frame).contains(&t) => {
                let c = o.intensity as f64;
                draw(&mut data, w, h, &o.rect, |_, _| c);
                true
            }
            _ => false,
        };

        if !occluded {
            for (i, vt) in truth.iter().enumerate() {
                let b = &vt.boxes[t];
                let overlapped = truth
                    .iter()
                    .enumerate()
                    .any(|(j, o)| j != i && o.boxes[t].iou(b) > 0.0);
                if overlapped {
                    continue;
                }
                if let (Some(fg), Some(bg)) = (box_mean(&data, w, h, b), box_mean(background.data(), w, h, b)) {
                    if (fg - bg).abs() < MIN_CONTRAST {
                        return Err(Error::invalid(format!(
                            "vehicle {i} contrast {:.3} below {MIN_CONTRAST} at frame {t}",
                            (fg - bg).abs()
                        )));
                    }
                }
            }
        }
        frames.push(ImageFrame::from_raw(w, h, data));
    }
    let seq = VideoSequence::new(frames, spec.fps, "synthetic", "synthetic")?;
    Ok((seq, SyntheticGroundTruth { vehicles: truth }))
}
