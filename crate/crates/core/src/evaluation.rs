//! Per-range velocity error and the three-range challenge score.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_range_by_distance, RangeClass, VehicleAnnotation};

/// One entry of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub vehicle_id: String,
    pub velocity: [f64; 2],
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeCounts {
    pub near: usize,
    pub medium: usize,
    pub far: usize,
}

/// Errors in m²/s²; `None` marks a range without test vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub e_near: Option<f64>,
    pub e_medium: Option<f64>,
    pub e_far: Option<f64>,
    /// Mean of the three range errors; undefined if any range is empty.
    pub e_v: Option<f64>,
    pub counts: RangeCounts,
    /// Square root of the mean squared velocity error over all vehicles, m/s.
    pub rmse_overall: Option<f64>,
}

fn squared_error(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Mean squared Euclidean velocity error of one range; `None` when empty.
pub fn range_mse(predicted: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<Option<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth velocities",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Ok(None);
    }
    let sum: f64 = predicted.iter().zip(truth).map(|(p, t)| squared_error(p, t)).sum();
    Ok(Some(sum / predicted.len() as f64))
}

/// Arithmetic mean of the three range errors.
pub fn challenge_score(e_near: f64, e_medium: f64, e_far: f64) -> Result<f64> {
    for e in [e_near, e_medium, e_far] {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::invalid(format!("range error {e} must be finite and non-negative")));
        }
    }
    Ok((e_near + e_medium + e_far) / 3.0)
}

/// Scores predictions against annotated vehicles, bucketed by true distance.
/// `truth` pairs vehicle ids with their annotations; every vehicle needs a
/// prediction and ground-truth velocity and position.
pub fn evaluate_dataset(predictions: &[Prediction], truth: &[(String, VehicleAnnotation)]) -> Result<EvaluationReport> {
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.vehicle_id.as_str(), p)).collect();
    let mut problems = Vec::new();
    let mut buckets: [(Vec<[f64; 2]>, Vec<[f64; 2]>); 3] = Default::default();
    for (id, ann) in truth {
        let (Some(v), Some(d)) = (ann.velocity, ann.distance()) else {
            problems.push(format!("{id}: missing ground-truth velocity or position"));
            continue;
        };
        let Some(p) = by_id.get(id.as_str()) else {
            problems.push(format!("{id}: no prediction"));
            continue;
        };
        let r = classify_range_by_distance(d)?;
        buckets[r as usize].0.push(p.velocity);
        buckets[r as usize].1.push(v);
    }
    if !problems.is_empty() {
        return Err(Error::invalid(format!(
            "cannot evaluate {} vehicle(s):\n{}",
            problems.len(),
            problems.join("\n")
        )));
    }

    let mut e = [None; 3];
    for r in RangeClass::ALL {
        let (p, t) = &buckets[r as usize];
        e[r as usize] = range_mse(p, t)?;
    }
    let e_v = match e {
        [Some(a), Some(b), Some(c)] => Some(challenge_score(a, b, c)?),
        _ => None,
    };
    let total: usize = buckets.iter().map(|b| b.0.len()).sum();
    let sum: f64 = buckets
        .iter()
        .flat_map(|(p, t)| p.iter().zip(t).map(|(p, t)| squared_error(p, t)))
        .sum();
    Ok(EvaluationReport {
        e_near: e[0],
        e_medium: e[1],
        e_far: e[2],
        e_v,
        counts: RangeCounts {
            near: buckets[0].0.len(),
            medium: buckets[1].0.len(),
            far: buckets[2].0.len(),
        },
        rmse_overall: (total > 0).then(|| (sum / total as f64).sqrt()),
    })
}

/// Bar plot of the per-range errors and their mean.
pub fn report_svg(report: &EvaluationReport) -> String {
    let bars = [
        ("near", report.e_near, report.counts.near),
        ("medium", report.e_medium, report.counts.medium),
        ("far", report.e_far, report.counts.far),
        ("E_V", report.e_v, report.counts.near + report.counts.medium + report.counts.far),
    ];
    let (w, h, margin) = (480.0, 300.0, 40.0);
    let top = bars
        .iter()
        .filter_map(|b| b.1)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let slot = (w - 2.0 * margin) / bars.len() as f64;
    let plot_h = h - 2.0 * margin;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">velocity MSE (m²/s²)</text>"#,
        w / 2.0
    );
    let base = h - margin;
    let _ = writeln!(
        svg,
        r##"<line x1="{margin}" y1="{base}" x2="{}" y2="{base}" stroke="#333"/>"##,
        w - margin
    );
    for (i, (name, value, count)) in bars.iter().enumerate() {
        let cx = margin + slot * (i as f64 + 0.5);
        let label_y = base + 16.0;
        let _ = writeln!(svg, r#"<text x="{cx:.1}" y="{label_y}" text-anchor="middle">{name} (n={count})</text>"#);
        match value {
            Some(v) => {
                let bh = plot_h * v / top;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#4a78b0"/>"##,
                    cx - slot * 0.3,
                    base - bh,
                    slot * 0.6
                );
                let _ = writeln!(
                    svg,
                    r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#,
                    base - bh - 4.0
                );
            }
            None => {
                let _ = writeln!(svg, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">n/a</text>"#, base - 4.0);
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
