use super::TrackerConfig;
use crate::error::Result;
use crate::geometry::{BoundingBox, ImageFrame};

/// Template samples per box side; larger boxes are subsampled.
const MAX_TEMPLATE_SIDE: f64 = 48.0;
/// Peak correlation below which a fallback match is flagged.
const MIN_PEAK_SCORE: f64 = 0.8;

/// Diagnostic attached to a fallback step whose result is doubtful.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackFlag {
    /// No template pixel lies inside the previous frame.
    TemplateOffImage,
    /// The template has no intensity variation.
    FlatTemplate,
    /// The best offset lies on the boundary of the search window.
    PeakOnSearchBorder,
    LowCorrelation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackStep {
    pub bbox: BoundingBox,
    pub offset: (isize, isize),
    pub score: f64,
    pub flag: Option<FallbackFlag>,
}

/// Exhaustive integer-offset NCC search of the `prev` template inside `next`.
/// The box is translated, never rescaled.
pub fn ncc_fallback_step(
    prev: &ImageFrame,
    next: &ImageFrame,
    b: &BoundingBox,
    cfg: &TrackerConfig,
) -> Result<FallbackStep> {
    b.validate()?;
    let unchanged = |flag| FallbackStep {
        bbox: *b,
        offset: (0, 0),
        score: 0.0,
        flag: Some(flag),
    };

    let step = (b.w.max(b.h) / MAX_TEMPLATE_SIDE).ceil().max(1.0);
    let xs: Vec<f64> = grid(b.x, b.w, step);
    let ys: Vec<f64> = grid(b.y, b.h, step);
    let inside = |f: &ImageFrame, x: f64, y: f64| {
        x >= 0.0 && y >= 0.0 && x <= (f.width() - 1) as f64 && y <= (f.height() - 1) as f64
    };

    let mut positions = Vec::with_capacity(xs.len() * ys.len());
    let mut template = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            if inside(prev, x, y) {
                positions.push((x, y));
                template.push(prev.sample(x, y));
            }
        }
    }
    if positions.is_empty() {
        return Ok(unchanged(FallbackFlag::TemplateOffImage));
    }
    let n = template.len() as f64;
    let t_mean = template.iter().sum::<f64>() / n;
    let t_var: f64 = template.iter().map(|t| (t - t_mean).powi(2)).sum();
    if t_var <= 1e-12 {
        return Ok(unchanged(FallbackFlag::FlatTemplate));
    }
    let centered: Vec<f64> = template.iter().map(|t| t - t_mean).collect();

    let r = cfg.ncc_search_radius as isize;
    let mut best = (f64::NEG_INFINITY, (0isize, 0isize));
    let mut patch = Vec::with_capacity(positions.len());
    for oy in -r..=r {
        for ox in -r..=r {
            patch.clear();
            let (fx, fy) = (ox as f64, oy as f64);
            let mut valid = true;
            for &(x, y) in &positions {
                let (qx, qy) = (x + fx, y + fy);
                if !inside(next, qx, qy) {
                    valid = false;
                    break;
                }
                patch.push(next.sample(qx, qy));
            }
            if !valid {
                continue;
            }
            let p_mean = patch.iter().sum::<f64>() / n;
            let (mut cov, mut p_var) = (0.0, 0.0);
            for (c, p) in centered.iter().zip(&patch) {
                let d = p - p_mean;
                cov += c * d;
                p_var += d * d;
            }
            let score = if p_var <= 1e-12 { 0.0 } else { cov / (t_var * p_var).sqrt() };
            if score > best.0 {
                best = (score, (ox, oy));
            }
        }
    }

    if best.0 == f64::NEG_INFINITY {
        return Ok(unchanged(FallbackFlag::TemplateOffImage));
    }
    let (score, offset) = best;
    let flag = if offset.0.abs() == r || offset.1.abs() == r {
        Some(FallbackFlag::PeakOnSearchBorder)
    } else if score < MIN_PEAK_SCORE {
        Some(FallbackFlag::LowCorrelation)
    } else {
        None
    };
    Ok(FallbackStep {
        bbox: b.translated(offset.0 as f64, offset.1 as f64),
        offset,
        score,
        flag,
    })
}

fn grid(start: f64, len: f64, step: f64) -> Vec<f64> {
    let count = ((len / step).floor() as usize).max(1);
    let margin = 0.5 * (len - (count - 1) as f64 * step);
    (0..count).map(|i| start + margin + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::testutil::{noise, shift_int, textured};

    fn cfg() -> TrackerConfig {
        TrackerConfig::default()
    }

    #[test]
    fn autocorrelation_peak_at_origin() {
        let f = textured(160, 120, 4);
        let b = BoundingBox::new(50.2, 40.6, 30.0, 20.0).unwrap();
        let s = ncc_fallback_step(&f, &f, &b, &cfg()).unwrap();
        assert_eq!(s.offset, (0, 0));
        assert_eq!(s.bbox, b);
        assert_eq!(s.flag, None);
    }

    #[test]
    fn integer_shift_recovered_exactly() {
        let f = textured(160, 120, 9);
        let g = shift_int(&f, 5, 3);
        let b = BoundingBox::new(60.0, 45.0, 24.0, 18.0).unwrap();
        let s = ncc_fallback_step(&f, &g, &b, &cfg()).unwrap();
        assert_eq!(s.offset, (5, 3));
        assert_eq!(s.bbox, b.translated(5.0, 3.0));
        assert!((s.score - 1.0).abs() < 1e-9);
        assert_eq!((s.bbox.w, s.bbox.h), (b.w, b.h));
    }

    #[test]
    fn out_of_range_shift_is_flagged() {
        let f = noise(200, 120, 13);
        let g = shift_int(&f, 30, 0);
        let b = BoundingBox::new(70.0, 45.0, 24.0, 18.0).unwrap();
        let s = ncc_fallback_step(&f, &g, &b, &cfg()).unwrap();
        assert!(s.offset.0.abs() <= 16 && s.offset.1.abs() <= 16);
        assert!(s.flag.is_some(), "{s:?}");
    }

    #[test]
    fn off_image_template_left_unchanged() {
        let f = textured(64, 64, 1);
        let b = BoundingBox::new(-50.0, -50.0, 20.0, 20.0).unwrap();
        let s = ncc_fallback_step(&f, &f, &b, &cfg()).unwrap();
        assert_eq!(s.bbox, b);
        assert_eq!(s.flag, Some(FallbackFlag::TemplateOffImage));
    }

    #[test]
    fn flat_template_left_unchanged() {
        let f = ImageFrame::filled(64, 64, 0.2).unwrap();
        let b = BoundingBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let s = ncc_fallback_step(&f, &f, &b, &cfg()).unwrap();
        assert_eq!(s.bbox, b);
        assert_eq!(s.flag, Some(FallbackFlag::FlatTemplate));
    }
}
