//! Limiting wave steepness: the empirical upper envelope
//! `s_max(h) = a (h / b)^(c / h)`, the period lower bound it implies and the
//! detrended period `t - t_min(h)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::HourlySeries;
use crate::optim::{levenberg_marquardt, LmOptions};

pub const G: f64 = 9.81;

/// Relative tolerance above `s_max` before a point counts as over-steep.
pub const ANOMALY_EPS: f64 = 1e-9;

pub const DEFAULT_BINS: usize = 108;
pub const DEFAULT_B_UPPER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteepnessCurve {
    pub a: f64,
    /// Meters.
    pub b: f64,
    /// Meters.
    pub c: f64,
    /// Fit quality; absent for curves built from given parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adj_r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedMaxima {
    pub h_center: Vec<f64>,
    pub s_max: Vec<f64>,
    pub count: Vec<usize>,
}

impl BinnedMaxima {
    pub fn len(&self) -> usize {
        self.h_center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_center.is_empty()
    }
}

/// `s = (2 pi / g) h / t^2`.
pub fn steepness(h: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("period {t} must be > 0")));
    }
    if !(h >= 0.0) {
        return Err(Error::domain(format!("height {h} must be >= 0")));
    }
    Ok(2.0 * PI / G * h / (t * t))
}

impl SteepnessCurve {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let curve = Self {
            a,
            b,
            c,
            adj_r2: None,
            rmse: None,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invariant(format!(
                    "steepness parameter {name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    fn s_max_unchecked(&self, h: f64) -> f64 {
        self.a * ((self.c / h) * (h / self.b).ln()).exp()
    }

    pub fn s_max(&self, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::domain(format!("height {h} must be > 0")));
        }
        Ok(self.s_max_unchecked(h))
    }

    /// Lower bound on the mean period at height `h`.
    pub fn t_min(&self, h: f64) -> Result<f64> {
        let s = self.s_max(h)?;
        Ok((2.0 * PI / G * h / s).sqrt())
    }

    /// `t - t_min(h)`. Periods below the bound (beyond floating-point
    /// tolerance) are reported as a domain error.
    pub fn detrend_period(&self, h: f64, t: f64) -> Result<f64> {
        let tmin = self.t_min(h)?;
        let d = t - tmin;
        if d < 0.0 {
            if -d <= 0.5 * ANOMALY_EPS * tmin {
                return Ok(0.0);
            }
            return Err(Error::domain(format!(
                "period {t} below limiting period {tmin} at h = {h}"
            )));
        }
        Ok(d)
    }

    pub fn restore_period(&self, h: f64, t_detrended: f64) -> Result<f64> {
        if !(t_detrended >= 0.0) {
            return Err(Error::domain(format!(
                "detrended period {t_detrended} must be >= 0"
            )));
        }
        Ok(self.t_min(h)? + t_detrended)
    }

    /// True when `(h, t)` lies above the limiting steepness.
    pub fn is_over_steep(&self, h: f64, t: f64) -> bool {
        match (steepness(h, t), self.s_max(h)) {
            (Ok(s), Ok(smax)) => s > smax * (1.0 + ANOMALY_EPS),
            _ => false,
        }
    }
}

/// Joint `(h, t)` observations with `h > 0`.
fn joint_points(series: &HourlySeries) -> Vec<(f64, f64)> {
    series
        .hm0
        .iter()
        .zip(&series.tm02)
        .filter_map(|(h, t)| match (h, t) {
            (Some(h), Some(t)) if *h > 0.0 => Some((*h, *t)),
            _ => None,
        })
        .collect()
}

/// Split joint observations into `n_bins` equal-count bins over sorted
/// height and record each bin's maximum steepness. With a remainder the
/// first bins hold one extra point.
pub fn bin_max_steepness(series: &HourlySeries, n_bins: usize) -> Result<BinnedMaxima> {
    bin_points(joint_points(series), n_bins)
}

pub fn bin_points(mut pts: Vec<(f64, f64)>, n_bins: usize) -> Result<BinnedMaxima> {
    if n_bins < 2 {
        return Err(Error::size(format!("need at least 2 bins, got {n_bins}")));
    }
    if pts.len() < n_bins {
        return Err(Error::size(format!(
            "{} joint observations cannot fill {n_bins} bins",
            pts.len()
        )));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts[0].0 == pts[pts.len() - 1].0 {
        return Err(Error::size(
            "all heights identical; bins would have zero width",
        ));
    }
    let base = pts.len() / n_bins;
    let extra = pts.len() % n_bins;
    let mut out = BinnedMaxima {
        h_center: Vec::with_capacity(n_bins),
        s_max: Vec::with_capacity(n_bins),
        count: Vec::with_capacity(n_bins),
    };
    let mut start = 0;
    for k in 0..n_bins {
        let size = base + usize::from(k < extra);
        let bin = &pts[start..start + size];
        start += size;
        let smax = bin
            .iter()
            .map(|&(h, t)| 2.0 * PI / G * h / (t * t))
            .fold(f64::NEG_INFINITY, f64::max);
        out.h_center.push(0.5 * (bin[0].0 + bin[size - 1].0));
        out.s_max.push(smax);
        out.count.push(size);
    }
    Ok(out)
}

/// Nonlinear least-squares fit of `s_max(h)` to binned maxima with
/// `0 < b <= b_upper`, multi-started over `c`.
pub fn fit_limit_curve(points: &BinnedMaxima, b_upper: f64) -> Result<SteepnessCurve> {
    let m = points.len();
    if m < 4 {
        return Err(Error::fit(format!(
            "need at least 4 binned maxima, got {m}"
        )));
    }
    let h = &points.h_center;
    let s = &points.s_max;
    if h.iter().chain(s).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain("binned maxima must be positive and finite"));
    }
    let h_max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(b_upper > h_max) {
        return Err(Error::domain(format!(
            "b_upper {b_upper} must exceed the largest binned height {h_max}"
        )));
    }
    let residuals = |p: &[f64], r: &mut [f64]| {
        for i in 0..m {
            r[i] = p[0] * ((p[2] / h[i]) * (h[i] / p[1]).ln()).exp() - s[i];
        }
    };
    let jacobian = |p: &[f64], j: &mut [f64]| {
        for i in 0..m {
            let lr = (h[i] / p[1]).ln();
            let e = ((p[2] / h[i]) * lr).exp();
            j[3 * i] = e;
            j[3 * i + 1] = -p[0] * e * p[2] / (h[i] * p[1]);
            j[3 * i + 2] = p[0] * e * lr / h[i];
        }
    };
    let a0 = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lower = [1e-10, 1e-6, 1e-10];
    let upper = [10.0, b_upper, 100.0];
    let mut best: Option<crate::optim::LeastSquaresFit> = None;
    for c0 in [0.01, 0.1, 1.0] {
        let fit = levenberg_marquardt(
            residuals,
            jacobian,
            &[a0, b_upper, c0],
            &lower,
            &upper,
            m,
            LmOptions::default(),
        );
        if fit.sse.is_finite() && best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    let fit = best.ok_or_else(|| Error::fit("steepness fit produced no finite solution"))?;
    if !fit.converged {
        return Err(Error::fit(format!(
            "steepness fit did not converge (residual sum of squares {:.3e})",
            fit.sse
        )));
    }
    // b or c on its floor means no admissible minimizer: the curve has
    // flattened to a height-independent limit.
    if fit.x[1] <= 2.0 * lower[1] || fit.x[2] <= 2.0 * lower[2] {
        return Err(Error::fit(format!(
            "steepness fit degenerated to a height-independent limit (b = {:.3e} m, c = {:.3e} m, residual sum of squares {:.3e})",
            fit.x[1], fit.x[2], fit.sse
        )));
    }
    let mean = s.iter().sum::<f64>() / m as f64;
    let sst: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
    let dfe = (m - 3) as f64;
    let adj_r2 = 1.0 - fit.sse * (m as f64 - 1.0) / (sst * dfe);
    let rmse = (fit.sse / dfe).sqrt();
    let curve = SteepnessCurve {
        a: fit.x[0],
        b: fit.x[1],
        c: fit.x[2],
        adj_r2: Some(adj_r2),
        rmse: Some(rmse),
    };
    curve.validate().map_err(|e| Error::fit(e.to_string()))?;
    Ok(curve)
}

/// Mask joint observations above the limiting steepness. Returns the
/// number of hours masked.
pub fn flag_anomalies(series: &mut HourlySeries, curve: &SteepnessCurve) -> usize {
    let mut count = 0;
    for i in 0..series.len() {
        if let (Some(h), Some(t)) = (series.hm0[i], series.tm02[i]) {
            if h > 0.0 && curve.is_over_steep(h, t) {
                series.hm0[i] = None;
                series.tm02[i] = None;
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_curve() -> SteepnessCurve {
        SteepnessCurve::new(0.0782, 9.994, 0.07674).unwrap()
    }

    #[test]
    fn steepness_desk_values() {
        assert!((steepness(3.19, 6.1).unwrap() - 0.0549).abs() < 5e-5);
        assert!((steepness(1.0, 10.0).unwrap() - 0.00640).abs() < 5e-6);
        assert_eq!(steepness(0.0, 7.0).unwrap(), 0.0);
        assert!(steepness(1.0, 0.0).is_err());
    }

    #[test]
    fn curve_desk_values() {
        let c = reference_curve();
        assert_eq!(c.s_max(c.b).unwrap(), c.a);
        assert!((c.s_max(3.19).unwrap() - 0.0761).abs() < 5e-5);
        assert!((c.t_min(3.19).unwrap() - 5.18).abs() < 5e-3);
        assert!(c.s_max(0.5).unwrap() < c.s_max(3.0).unwrap());
        assert!((c.detrend_period(3.19, 6.1).unwrap() - 0.92).abs() < 5e-3);
        assert!(c.s_max(0.0).is_err());
    }

    #[test]
    fn t_min_grows_without_bound_near_zero_height() {
        // (h/b)^(c/h) vanishes faster than h, so the bound diverges as h -> 0.
        let c = reference_curve();
        assert!(c.t_min(0.05).unwrap() > 30.0);
        assert!(c.t_min(0.1).unwrap() > c.t_min(0.3).unwrap());
    }

    #[test]
    fn binning_examples() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (0.1 + i as f64, 6.0)).collect();
        let b = bin_points(pts, 2).unwrap();
        assert_eq!(b.count, vec![5, 5]);
        assert_eq!(b.h_center[0], 0.5 * (0.1 + 4.1));
        let same: Vec<(f64, f64)> = (0..10).map(|_| (1.0, 6.0)).collect();
        assert!(bin_points(same, 2).is_err());
        let odd: Vec<(f64, f64)> = (0..11).map(|i| (0.1 + i as f64, 6.0)).collect();
        assert_eq!(bin_points(odd, 3).unwrap().count, vec![4, 4, 3]);
        let points: Vec<(f64, f64)> = (0..201_960)
            .map(|i| (0.01 + i as f64 * 1e-5, 6.0))
            .collect();
        let b = bin_points(points, 108).unwrap();
        assert!(b.count.iter().all(|&c| c == 1870));
    }

    #[test]
    fn fit_recovers_noise_free_parameters() {
        let truth = reference_curve();
        let h: Vec<f64> = (0..60).map(|i| 0.2 + 0.1 * i as f64).collect();
        let pts = BinnedMaxima {
            s_max: h.iter().map(|&x| truth.s_max(x).unwrap()).collect(),
            count: vec![1; h.len()],
            h_center: h,
        };
        let fit = fit_limit_curve(&pts, 10.0).unwrap();
        assert!((fit.a / truth.a - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.b / truth.b - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.c / truth.c - 1.0).abs() < 0.01, "{fit:?}");
        assert!(fit.rmse.unwrap() < 1e-6);
    }

    #[test]
    fn fit_rejects_height_independent_maxima() {
        let h: Vec<f64> = (0..40).map(|i| 0.2 + 0.1 * i as f64).collect();
        let bins = BinnedMaxima {
            s_max: vec![0.05; h.len()],
            count: vec![1; h.len()],
            h_center: h,
        };
        let err = fit_limit_curve(&bins, 10.0).unwrap_err();
        assert!(
            err.is_fit_failure() && err.to_string().contains("height-independent"),
            "{err}"
        );
    }

    #[test]
    fn fit_rejects_underdetermined() {
        let pts = BinnedMaxima {
            h_center: vec![1.0, 2.0],
            s_max: vec![0.05, 0.06],
            count: vec![1, 1],
        };
        assert!(matches!(fit_limit_curve(&pts, 10.0), Err(Error::Fit(_))));
    }

    #[test]
    fn anomalies_flagged_above_curve_only() {
        let c = reference_curve();
        let mut s = HourlySeries::with_len(3);
        s.hm0 = vec![Some(2.0), Some(2.0), Some(2.0)];
        let tmin = c.t_min(2.0).unwrap();
        s.tm02 = vec![Some(tmin), Some(tmin * 0.9), Some(tmin * 1.5)];
        assert_eq!(flag_anomalies(&mut s, &c), 1);
        assert_eq!(s.hm0[1], None);
        assert_eq!(s.tm02[0], Some(tmin));
        assert_eq!(flag_anomalies(&mut s, &c), 0);
    }

    proptest! {
        #[test]
        fn detrend_restore_inverse(h in 0.15f64..9.9, extra in 0.0f64..10.0) {
            let c = reference_curve();
            let t = c.t_min(h).unwrap() + extra;
            let d = c.detrend_period(h, t).unwrap();
            prop_assert!(d >= 0.0);
            let back = c.restore_period(h, d).unwrap();
            prop_assert!((back - t).abs() <= 4.0 * f64::EPSILON * t);
        }

        #[test]
        fn t_min_attains_limit(h in 0.05f64..9.99) {
            let c = reference_curve();
            let s = steepness(h, c.t_min(h).unwrap()).unwrap();
            let smax = c.s_max(h).unwrap();
            prop_assert!((s - smax).abs() <= 1e-14 * smax);
            prop_assert!(smax > 0.0 && smax.is_finite());
        }
    }
}
