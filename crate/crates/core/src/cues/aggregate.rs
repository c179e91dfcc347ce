use super::DenseMap;
use crate::error::{Error, Result};
use crate::geometry::{shrink_box, BoundingBox};

/// Mean of the map cells whose centers fall inside the shrunken box.
///
/// `b` is in video pixels and is rescaled onto the map grid first. When no
/// cell center is covered the map is sampled bilinearly at the box center.
pub fn aggregate_in_box(
    m: &DenseMap,
    b: &BoundingBox,
    video_dims: (f64, f64),
    shrink_fraction: f64,
) -> Result<f64> {
    let (vw, vh) = video_dims;
    if !(vw > 0.0 && vh > 0.0) {
        return Err(Error::invalid("video dimensions must be positive"));
    }
    b.validate()?;
    if !(b.x < vw && b.y < vh && b.right() > 0.0 && b.bottom() > 0.0) {
        return Err(Error::invalid(format!("box {b:?} lies outside the {vw}x{vh} frame")));
    }
    let sx = m.width() as f64 / vw;
    let sy = m.height() as f64 / vh;
    let scaled = BoundingBox::new(b.x * sx, b.y * sy, b.w * sx, b.h * sy)?;
    let s = shrink_box(&scaled, shrink_fraction)?;

    // cell i has its center at i + 0.5; keep centers in [left, right)
    let cells = |lo: f64, hi: f64, n: usize| {
        let first = (lo - 0.5).ceil().max(0.0);
        let end = (hi - 0.5).ceil().min(n as f64);
        if end > first {
            Some((first as usize, end as usize))
        } else {
            None
        }
    };
    match (cells(s.x, s.right(), m.width()), cells(s.y, s.bottom(), m.height())) {
        (Some((x0, x1)), Some((y0, y1))) => {
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += m.values()[y * m.width() + x0..y * m.width() + x1]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            Ok(sum / ((x1 - x0) * (y1 - y0)) as f64)
        }
        _ => {
            let (cx, cy) = s.center();
            Ok(m.sample(cx - 0.5, cy - 0.5))
        }
    }
}
