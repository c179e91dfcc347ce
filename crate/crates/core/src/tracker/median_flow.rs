use super::lk::{track_with_scratch, LkScratch};
use super::pyramid::{build_pyramid, ImagePyramid};
use super::{median, TrackerConfig};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ImageFrame};

/// Forward/backward trajectory of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTrack {
    pub start: (f64, f64),
    pub forward: (f64, f64),
    pub backward: (f64, f64),
    /// `‖start − backward‖`, or `+∞` when either direction did not converge.
    pub fb_error: f64,
    pub ncc: f64,
    pub converged: bool,
}

/// Why a Median Flow step declined to produce a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MedianFlowFailure {
    TooFewPoints { kept: usize },
    LargeFbError { median_fb: f64 },
    BoxLeftFrame,
}

#[derive(Debug, Clone)]
pub struct MedianFlowStep {
    pub outcome: std::result::Result<BoundingBox, MedianFlowFailure>,
    pub points: Vec<PointTrack>,
    /// Indices into `points` that passed both filters.
    pub kept: Vec<usize>,
}

impl MedianFlowStep {
    pub fn bbox(&self) -> Option<BoundingBox> {
        self.outcome.ok()
    }
}

/// One Median Flow update of `b` from `prev` to `next`.
pub fn median_flow_step(
    prev: &ImageFrame,
    next: &ImageFrame,
    b: &BoundingBox,
    cfg: &TrackerConfig,
) -> Result<MedianFlowStep> {
    cfg.validate()?;
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Err(Error::invalid("frames differ in size"));
    }
    let pp = build_pyramid(prev, cfg.pyramid_levels)?;
    let pn = build_pyramid(next, cfg.pyramid_levels)?;
    median_flow_step_pyr(&pp, &pn, b, cfg)
}

/// [`median_flow_step`] on prebuilt pyramids.
pub fn median_flow_step_pyr(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    b: &BoundingBox,
    cfg: &TrackerConfig,
) -> Result<MedianFlowStep> {
    b.validate()?;
    let base = prev.base();
    let (w, h) = (base.width(), base.height());
    if !b.overlaps_frame(w, h) {
        return Err(Error::invalid(format!("box {b:?} does not overlap the {w}x{h} frame")));
    }

    let mut scratch = LkScratch::new(cfg.lk_window);
    let in_image = |p: (f64, f64)| p.0 >= 0.0 && p.1 >= 0.0 && p.0 <= (w - 1) as f64 && p.1 <= (h - 1) as f64;

    let g = cfg.grid;
    let mut points = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            let start = (
                b.x + (i as f64 + 0.5) * b.w / g as f64,
                b.y + (j as f64 + 0.5) * b.h / g as f64,
            );
            let mut pt = PointTrack {
                start,
                forward: start,
                backward: start,
                fb_error: f64::INFINITY,
                ncc: -1.0,
                converged: false,
            };
            if in_image(start) {
                let fwd = track_with_scratch(prev, next, start, cfg, &mut scratch);
                pt.forward = fwd.position;
                if fwd.converged && in_image(fwd.position) {
                    let bwd = track_with_scratch(next, prev, fwd.position, cfg, &mut scratch);
                    pt.backward = bwd.position;
                    if bwd.converged {
                        pt.converged = true;
                        pt.fb_error = (start.0 - bwd.position.0).hypot(start.1 - bwd.position.1);
                        pt.ncc = patch_ncc(prev.base(), next.base(), start, fwd.position, cfg.lk_window);
                    }
                }
            }
            points.push(pt);
        }
    }

    let kept = select_reliable(&points, cfg.keep_fraction);
    let outcome = estimate_box(&points, &kept, b, cfg, (w, h));
    Ok(MedianFlowStep { outcome, points, kept })
}

/// Points in the best `keep` fraction by FB error and by NCC.
fn select_reliable(points: &[PointTrack], keep: f64) -> Vec<usize> {
    let converged: Vec<usize> = (0..points.len()).filter(|&i| points[i].converged).collect();
    if converged.is_empty() {
        return Vec::new();
    }
    let k = ((keep * converged.len() as f64).ceil() as usize).clamp(1, converged.len());
    let mut fb: Vec<f64> = converged.iter().map(|&i| points[i].fb_error).collect();
    let mut ncc: Vec<f64> = converged.iter().map(|&i| points[i].ncc).collect();
    fb.sort_by(f64::total_cmp);
    ncc.sort_by(|a, b| b.total_cmp(a));
    let fb_max = fb[k - 1];
    let ncc_min = ncc[k - 1];
    converged
        .into_iter()
        .filter(|&i| points[i].fb_error <= fb_max && points[i].ncc >= ncc_min)
        .collect()
}

fn estimate_box(
    points: &[PointTrack],
    kept: &[usize],
    b: &BoundingBox,
    cfg: &TrackerConfig,
    (w, h): (usize, usize),
) -> std::result::Result<BoundingBox, MedianFlowFailure> {
    if kept.len() < 4 {
        return Err(MedianFlowFailure::TooFewPoints { kept: kept.len() });
    }
    let mut fb: Vec<f64> = kept.iter().map(|&i| points[i].fb_error).collect();
    let median_fb = median(&mut fb).unwrap();
    if median_fb > cfg.failure_fb_threshold {
        return Err(MedianFlowFailure::LargeFbError { median_fb });
    }

    let mut dx: Vec<f64> = kept.iter().map(|&i| points[i].forward.0 - points[i].start.0).collect();
    let mut dy: Vec<f64> = kept.iter().map(|&i| points[i].forward.1 - points[i].start.1).collect();
    let dx = median(&mut dx).unwrap();
    let dy = median(&mut dy).unwrap();

    let mut ratios = Vec::with_capacity(kept.len() * (kept.len() - 1) / 2);
    for (a, &i) in kept.iter().enumerate() {
        for &j in &kept[a + 1..] {
            let (pi, pj) = (&points[i], &points[j]);
            let d_prev = (pi.start.0 - pj.start.0).hypot(pi.start.1 - pj.start.1);
            if d_prev > 0.0 {
                let d_next = (pi.forward.0 - pj.forward.0).hypot(pi.forward.1 - pj.forward.1);
                ratios.push(d_next / d_prev);
            }
        }
    }
    let scale = median(&mut ratios).unwrap_or(1.0);

    let out = BoundingBox {
        x: b.x + dx - 0.5 * b.w * (scale - 1.0),
        y: b.y + dy - 0.5 * b.h * (scale - 1.0),
        w: b.w * scale,
        h: b.h * scale,
    };
    if out.validate().is_err() || !out.overlaps_frame(w, h) {
        return Err(MedianFlowFailure::BoxLeftFrame);
    }
    Ok(out)
}

/// NCC between the `window`-sized patches around `a` in `fa` and `b` in `fb`.
fn patch_ncc(fa: &ImageFrame, fb: &ImageFrame, a: (f64, f64), b: (f64, f64), window: usize) -> f64 {
    let half = (window / 2) as isize;
    let n = (window * window) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for dy in -half..=half {
        for dx in -half..=half {
            let va = fa.sample(a.0 + dx as f64, a.1 + dy as f64);
            let vb = fb.sample(b.0 + dx as f64, b.1 + dy as f64);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
        }
    }
    let cov = sab - sa * sb / n;
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    let denom = (var_a * var_b).sqrt();
    if denom <= 1e-12 {
        0.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    }
}
