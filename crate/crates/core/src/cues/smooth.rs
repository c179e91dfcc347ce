use super::CueSeries;
use crate::error::{Error, Result};

/// Normalized Gaussian weights for offsets `-(taps-1)/2 ..= (taps-1)/2`.
pub fn gaussian_kernel(taps: usize, sigma: f64) -> Result<Vec<f64>> {
    if taps % 2 == 0 {
        return Err(Error::invalid(format!("kernel length {taps} must be odd")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma {sigma} must be positive")));
    }
    let half = (taps / 2) as i64;
    let raw: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Convolves with a Gaussian kernel, replicating the end values.
pub fn smooth_values(values: &[f64], taps: usize, sigma: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot smooth an empty series"));
    }
    let kernel = gaussian_kernel(taps, sigma)?;
    let half = (taps / 2) as isize;
    let last = values.len() as isize - 1;
    Ok((0..values.len() as isize)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[(t + k as isize - half).clamp(0, last) as usize])
                .sum()
        })
        .collect())
}

pub fn gaussian_smooth(s: &CueSeries, taps: usize, sigma: f64) -> Result<CueSeries> {
    Ok(CueSeries {
        channel: s.channel,
        values: smooth_values(&s.values, taps, sigma)?,
    })
}
