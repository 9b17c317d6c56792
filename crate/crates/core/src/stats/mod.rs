//! Univariate distribution toolkit.

mod ecdf;
mod kde;
mod ks;
mod rank;
mod skewt;

pub use ecdf::{pit_inverse, pit_normalize, EmpiricalCdf};
pub use kde::{kde_density, kde_grid_binned, silverman_bandwidth};
pub use ks::{kolmogorov_sf, ks_one_sample, ks_two_sample, KsResult};
pub use rank::{
    kendall_tau, kendall_tau_naive, pseudo_observations, pseudo_observations_random_ties,
    tau_independence_test, TauTest,
};
pub use skewt::{fit_skew_t, SkewTParams};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Moment skewness `m3 / m2^(3/2)`.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::size("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn quantile(x: &[f64], p: f64) -> Result<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Autocorrelation of a complete series at the given lag.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    let num: f64 = x.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    num / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0).unwrap(), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0).unwrap(), 4.0);
        assert!((quantile_sorted(&s, 0.5).unwrap() - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&s, 0.05).unwrap() - 1.15).abs() < 1e-12);
        assert!(quantile_sorted(&[], 0.5).is_err());
    }

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert!((mean(&x) - 4.0).abs() < 1e-15);
        assert!((variance(&x) - 12.5).abs() < 1e-12);
        assert!(skewness(&x) > 0.0);
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-15);
    }
}
