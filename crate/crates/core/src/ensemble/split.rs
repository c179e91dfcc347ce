use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_range_by_distance, RangeClass};

/// Minimum calibration samples per true range class.
pub const MIN_CALIBRATION_PER_CLASS: usize = 10;

/// Last-frame box area thresholds (full-resolution pixels²) routing a vehicle
/// to a range model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaSplitConfig {
    /// Areas at or above this are Near.
    pub near_area: f64,
    /// Areas at or below this are Far.
    pub far_area: f64,
}

impl AreaSplitConfig {
    pub fn new(near_area: f64, far_area: f64) -> Result<Self> {
        let s = AreaSplitConfig { near_area, far_area };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near_area > self.far_area && self.far_area > 0.0 && self.near_area.is_finite()) {
            return Err(Error::invalid(format!(
                "area thresholds must satisfy near > far > 0, got near {} far {}",
                self.near_area, self.far_area
            )));
        }
        Ok(())
    }
}

pub fn classify_range_by_area(area: f64, split: &AreaSplitConfig) -> Result<RangeClass> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::invalid(format!("box area {area} must be positive")));
    }
    Ok(if area >= split.near_area {
        RangeClass::Near
    } else if area <= split.far_area {
        RangeClass::Far
    } else {
        RangeClass::Medium
    })
}

/// Number of `(area, distance)` pairs whose area routing disagrees with the
/// distance class.
pub fn routing_disagreement(samples: &[(f64, f64)], split: &AreaSplitConfig) -> Result<usize> {
    let mut n = 0;
    for &(a, d) in samples {
        if classify_range_by_area(a, split)? != classify_range_by_distance(d)? {
            n += 1;
        }
    }
    Ok(n)
}

/// Picks the threshold pair, among observed areas, that minimizes routing
/// disagreement with the distance classes of `(area, distance)` samples.
/// Ties go to the larger near threshold, then the larger far threshold.
pub fn calibrate_area_thresholds(samples: &[(f64, f64)]) -> Result<AreaSplitConfig> {
    let mut counts = [0usize; 3];
    let mut labelled = Vec::with_capacity(samples.len());
    for &(a, d) in samples {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("box area {a} must be positive")));
        }
        let c = classify_range_by_distance(d)? as usize;
        counts[c] += 1;
        labelled.push((a, c));
    }
    if counts.iter().any(|&c| c < MIN_CALIBRATION_PER_CLASS) {
        return Err(Error::invalid(format!(
            "calibration needs at least {MIN_CALIBRATION_PER_CLASS} samples per range, got near {} medium {} far {}",
            counts[0], counts[1], counts[2]
        )));
    }
    labelled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // unique areas and, per class, how many samples lie strictly below each
    let mut areas: Vec<f64> = Vec::new();
    let mut below: Vec<[usize; 3]> = Vec::new();
    let mut running = [0usize; 3];
    for &(a, c) in &labelled {
        if areas.last() != Some(&a) {
            areas.push(a);
            below.push(running);
        }
        running[c] += 1;
    }
    below.push(running);
    let u = areas.len();
    let (near, medium, far) = (0, 1, 2);

    // far threshold areas[j], near threshold areas[i], j < i
    let mut best: Option<(usize, usize, usize)> = None;
    for i in 1..u {
        // samples at or above areas[i] that are not Near
        let near_err = (counts[medium] - below[i][medium]) + (counts[far] - below[i][far]);
        for j in 0..i {
            let far_err = below[j + 1][near] + below[j + 1][medium];
            let mid_err = (below[i][near] - below[j + 1][near]) + (below[i][far] - below[j + 1][far]);
            let total = near_err + far_err + mid_err;
            let better = match best {
                None => true,
                Some((e, bi, bj)) => total < e || (total == e && (i > bi || (i == bi && j > bj))),
            };
            if better {
                best = Some((total, i, j));
            }
        }
    }
    let (_, i, j) = best.ok_or_else(|| Error::invalid("calibration needs at least two distinct areas"))?;
    AreaSplitConfig::new(areas[i], areas[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_conventions() {
        let s = AreaSplitConfig::new(1000.0, 100.0).unwrap();
        assert_eq!(classify_range_by_area(1000.0, &s).unwrap(), RangeClass::Near);
        assert_eq!(classify_range_by_area(500.0, &s).unwrap(), RangeClass::Medium);
        assert_eq!(classify_range_by_area(100.0, &s).unwrap(), RangeClass::Far);
        assert!(classify_range_by_area(0.0, &s).is_err());
        assert!(AreaSplitConfig::new(10.0, 10.0).is_err());
    }

    #[test]
    fn pinhole_areas_recover_analytic_thresholds() {
        let k = 4.0e6;
        let samples: Vec<(f64, f64)> = (0..600)
            .map(|i| {
                let d = 5.0 + i as f64 * 0.125;
                (k / (d * d), d)
            })
            .collect();
        let s = calibrate_area_thresholds(&samples).unwrap();
        assert_eq!(routing_disagreement(&samples, &s).unwrap(), 0);
        // smallest Near area sits just above k/20², largest Far area is k/45²
        assert!((s.near_area / (k / 400.0) - 1.0).abs() < 0.02, "{s:?}");
        assert_eq!(s.far_area, k / (45.0 * 45.0));
    }

    #[test]
    fn single_range_rejected() {
        let samples: Vec<(f64, f64)> = (0..30).map(|i| (1000.0 + i as f64, 30.0)).collect();
        assert!(calibrate_area_thresholds(&samples).is_err());
    }

    fn noisy_samples() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((6.0f64..80.0, -0.3f64..0.3), 40..90).prop_map(|v| {
            let mut v: Vec<(f64, f64)> = v
                .into_iter()
                .map(|(d, noise)| (1.0e6 / (d * d) * (1.0 + noise), d))
                .collect();
            // guarantee every class is represented
            for (i, d) in [(0, 8.0), (1, 30.0), (2, 60.0)] {
                for k in 0..10 {
                    v.push((1.0e6 / (d * d) * (1.0 + 0.01 * (k + i) as f64), d + 0.1 * k as f64));
                }
            }
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn calibration_is_scan_optimal(samples in noisy_samples()) {
            let s = calibrate_area_thresholds(&samples).unwrap();
            let best = routing_disagreement(&samples, &s).unwrap();
            let mut areas: Vec<f64> = samples.iter().map(|p| p.0).collect();
            areas.sort_by(f64::total_cmp);
            areas.dedup();
            for (i, &hi) in areas.iter().enumerate() {
                for &lo in &areas[..i] {
                    let alt = AreaSplitConfig::new(hi, lo).unwrap();
                    prop_assert!(best <= routing_disagreement(&samples, &alt).unwrap());
                }
            }
        }

        #[test]
        fn routing_is_monotone(a in 1.0f64..1e6, b in 1.0f64..1e6) {
            let s = AreaSplitConfig::new(5e4, 2e3).unwrap();
            let (ca, cb) = (classify_range_by_area(a, &s).unwrap(), classify_range_by_area(b, &s).unwrap());
            if a >= b {
                prop_assert!(ca <= cb);
            }
        }
    }
}
