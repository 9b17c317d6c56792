use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::special::normal_pdf;

/// Silverman's rule of thumb, `0.9 min(sd, IQR / 1.34) n^(-1/5)`.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let sd = super::std_dev(sample);
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = super::quantile_sorted(&s, 0.75).unwrap_or(0.0)
        - super::quantile_sorted(&s, 0.25).unwrap_or(0.0);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate evaluated at each grid point.
pub fn kde_density(sample: &[f64], grid: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::size("density estimate of an empty sample"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::domain(format!("bandwidth {bandwidth} must be > 0")));
    }
    let norm = 1.0 / (sample.len() as f64 * bandwidth);
    Ok(grid
        .par_iter()
        .map(|&g| {
            sample
                .iter()
                .map(|&x| normal_pdf((g - x) / bandwidth))
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Gaussian KDE on a uniform grid `lo + i * step` via linear binning and
/// discrete convolution. Suited to large samples; agrees with
/// [`kde_density`] to second order in `step / bandwidth`.
pub fn kde_grid_binned(
    sample: &[f64],
    lo: f64,
    step: f64,
    len: usize,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::size("density estimate of an empty sample"));
    }
    if !(bandwidth > 0.0 && step > 0.0) || len < 2 {
        return Err(Error::domain(
            "binned KDE needs positive bandwidth, step and len >= 2",
        ));
    }
    let mut counts = vec![0.0; len];
    for &x in sample {
        let pos = (x - lo) / step;
        if !(pos >= 0.0 && pos <= (len - 1) as f64) {
            continue;
        }
        let i = (pos.floor() as usize).min(len - 2);
        let f = pos - i as f64;
        counts[i] += 1.0 - f;
        counts[i + 1] += f;
    }
    let reach = ((5.0 * bandwidth / step).ceil() as usize).min(len - 1);
    let kernel: Vec<f64> = (0..=reach)
        .map(|k| normal_pdf(k as f64 * step / bandwidth) / bandwidth)
        .collect();
    let n = sample.len() as f64;
    Ok((0..len)
        .map(|g| {
            let mut acc = counts[g] * kernel[0];
            for (k, w) in kernel.iter().enumerate().skip(1) {
                if g >= k {
                    acc += counts[g - k] * w;
                }
                if g + k < len {
                    acc += counts[g + k] * w;
                }
            }
            acc / n
        })
        .collect())
}
