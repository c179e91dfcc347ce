//! Pyramidal Lucas-Kanade point tracking.

use super::pyramid::ImagePyramid;
use super::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::ImageFrame;

/// Result of tracking one point between two pyramids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkResult {
    pub position: (f64, f64),
    pub converged: bool,
}

/// Per-window buffers reused across levels and points.
pub(crate) struct LkScratch {
    template: Vec<f64>,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
}

impl LkScratch {
    pub(crate) fn new(window: usize) -> Self {
        let n = window * window;
        LkScratch {
            template: vec![0.0; n],
            grad_x: vec![0.0; n],
            grad_y: vec![0.0; n],
        }
    }
}

/// Tracks `p` (level-0 pixel coordinates) from `prev` to `next`.
///
/// Fails with invalid-argument if `p` lies outside the base image. A point is
/// reported as not converged when the gradient matrix of its window is
/// degenerate at some level or when its estimate leaves the image.
pub fn lk_track_point(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    p: (f64, f64),
    cfg: &TrackerConfig,
) -> Result<LkResult> {
    let base = prev.base();
    let inside = p.0 >= 0.0
        && p.1 >= 0.0
        && p.0 <= (base.width() - 1) as f64
        && p.1 <= (base.height() - 1) as f64;
    if !inside {
        return Err(Error::invalid(format!("point ({}, {}) outside image", p.0, p.1)));
    }
    if prev.len() != next.len() {
        return Err(Error::invalid("pyramids differ in depth"));
    }
    let mut scratch = LkScratch::new(cfg.lk_window);
    Ok(track_with_scratch(prev, next, p, cfg, &mut scratch))
}

pub(crate) fn track_with_scratch(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    p: (f64, f64),
    cfg: &TrackerConfig,
    scratch: &mut LkScratch,
) -> LkResult {
    let levels = prev.len().min(cfg.pyramid_levels).max(1);
    let mut guess = (0.0f64, 0.0f64);
    for level in (0..levels).rev() {
        let scale = 1.0 / (1u64 << level) as f64;
        let pl = (p.0 * scale, p.1 * scale);
        match refine_level(prev.level(level), next.level(level), pl, guess, cfg, scratch) {
            Some(d) => {
                if level > 0 {
                    guess = (2.0 * (guess.0 + d.0), 2.0 * (guess.1 + d.1));
                } else {
                    guess = (guess.0 + d.0, guess.1 + d.1);
                }
            }
            None => {
                return LkResult {
                    position: (p.0 + guess.0, p.1 + guess.1),
                    converged: false,
                }
            }
        }
    }
    LkResult {
        position: (p.0 + guess.0, p.1 + guess.1),
        converged: true,
    }
}

/// Iterative refinement at one level. Returns the increment on top of `guess`.
fn refine_level(
    prev: &ImageFrame,
    next: &ImageFrame,
    p: (f64, f64),
    guess: (f64, f64),
    cfg: &TrackerConfig,
    scratch: &mut LkScratch,
) -> Option<(f64, f64)> {
    let half = (cfg.lk_window / 2) as isize;
    let n = cfg.lk_window * cfg.lk_window;

    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    let mut idx = 0;
    for dy in -half..=half {
        for dx in -half..=half {
            let x = p.0 + dx as f64;
            let y = p.1 + dy as f64;
            let ix = 0.5 * (prev.sample(x + 1.0, y) - prev.sample(x - 1.0, y));
            let iy = 0.5 * (prev.sample(x, y + 1.0) - prev.sample(x, y - 1.0));
            scratch.template[idx] = prev.sample(x, y);
            scratch.grad_x[idx] = ix;
            scratch.grad_y[idx] = iy;
            gxx += ix * ix;
            gxy += ix * iy;
            gyy += iy * iy;
            idx += 1;
        }
    }

    let tr_half = 0.5 * (gxx + gyy);
    let min_eig = tr_half - ((0.5 * (gxx - gyy)).powi(2) + gxy * gxy).sqrt();
    if !(min_eig / n as f64 >= cfg.lk_min_eigenvalue) {
        return None;
    }
    let det = gxx * gyy - gxy * gxy;

    let xmax = (next.width() - 1) as f64;
    let ymax = (next.height() - 1) as f64;
    let mut v = (0.0f64, 0.0f64);
    for _ in 0..cfg.lk_max_iterations {
        let qx = p.0 + guess.0 + v.0;
        let qy = p.1 + guess.1 + v.1;
        if !(qx >= 0.0 && qy >= 0.0 && qx <= xmax && qy <= ymax) {
            return None;
        }
        let (mut bx, mut by) = (0.0, 0.0);
        let mut idx = 0;
        for dy in -half..=half {
            for dx in -half..=half {
                let diff = scratch.template[idx] - next.sample(qx + dx as f64, qy + dy as f64);
                bx += diff * scratch.grad_x[idx];
                by += diff * scratch.grad_y[idx];
                idx += 1;
            }
        }
        let ex = (gyy * bx - gxy * by) / det;
        let ey = (gxx * by - gxy * bx) / det;
        v.0 += ex;
        v.1 += ey;
        if ex * ex + ey * ey < cfg.lk_epsilon * cfg.lk_epsilon {
            break;
        }
    }
    let qx = p.0 + guess.0 + v.0;
    let qy = p.1 + guess.1 + v.1;
    if !(qx >= 0.0 && qy >= 0.0 && qx <= xmax && qy <= ymax) {
        return None;
    }
    Some(v)
}
