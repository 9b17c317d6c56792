//! Seasonal decomposition: kernel-smoothed local mean and standard deviation,
//! per-year Fourier fits of both, and a Gaussian model for the yearly
//! Fourier coefficients.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::HOURS_PER_YEAR;
use crate::error::{Error, Result};
use crate::stats::{pearson, tau_independence_test};

pub const DEFAULT_BANDWIDTH: usize = 720;
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Half-width of the cubic patch laid over each year boundary.
pub const PATCH_HALF_WIDTH: usize = 72;
pub const N_HARMONICS: usize = 5;
pub const MIN_FOURIER_POINTS: usize = 100;

/// Epanechnikov kernel `0.75 (1 - u^2)` on `[-1, 1]`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.75 * (1.0 - u * u)
    }
}

fn check_bandwidth(len: usize, bandwidth: usize) -> Result<()> {
    if bandwidth < 2 {
        return Err(Error::domain(format!(
            "bandwidth must be >= 2 hours, got {bandwidth}"
        )));
    }
    if len <= bandwidth {
        return Err(Error::size(format!(
            "series of {len} hours is not longer than the {bandwidth} h bandwidth"
        )));
    }
    Ok(())
}

/// Kernel-weighted sum over the window `|t - k| <= bandwidth / 2`, skipping
/// hours where `term` is `None`. Returns `None` when nothing contributes.
fn kernel_average<F>(len: usize, bandwidth: usize, term: F) -> Vec<Option<f64>>
where
    F: Fn(usize) -> Option<f64> + Sync,
{
    let half = bandwidth as f64 / 2.0;
    let reach = bandwidth / 2;
    let weights: Vec<f64> = (0..=reach).map(|d| epanechnikov(d as f64 / half)).collect();
    (0..len)
        .into_par_iter()
        .map(|t| {
            let lo = t.saturating_sub(reach);
            let hi = (t + reach).min(len - 1);
            let mut num = 0.0;
            let mut den = 0.0;
            for k in lo..=hi {
                if let Some(x) = term(k) {
                    let w = weights[t.abs_diff(k)];
                    num += w * x;
                    den += w;
                }
            }
            (den > 0.0).then(|| num / den)
        })
        .collect()
}

/// Local mean `mu_t` with the Epanechnikov kernel; the window is truncated at
/// the series edges and missing hours are left out of both sums.
pub fn smooth_mean(y: &[Option<f64>], bandwidth: usize) -> Result<Vec<Option<f64>>> {
    check_bandwidth(y.len(), bandwidth)?;
    Ok(kernel_average(y.len(), bandwidth, |k| y[k]))
}

/// Local standard deviation around `mu`, floored at [`SIGMA_FLOOR`].
pub fn smooth_std(
    y: &[Option<f64>],
    mu: &[Option<f64>],
    bandwidth: usize,
) -> Result<Vec<Option<f64>>> {
    check_bandwidth(y.len(), bandwidth)?;
    if mu.len() != y.len() {
        return Err(Error::size("mean series length differs from data length"));
    }
    let var = kernel_average(y.len(), bandwidth, |k| match (y[k], mu[k]) {
        (Some(a), Some(m)) => Some((a - m) * (a - m)),
        _ => None,
    });
    Ok(var
        .into_iter()
        .map(|v| v.map(|v| v.sqrt().max(SIGMA_FLOOR)))
        .collect())
}

pub fn standardize(y: f64, mu: f64, sigma: f64) -> f64 {
    (y - mu) / sigma
}

pub fn destandardize(z: f64, mu: f64, sigma: f64) -> f64 {
    mu + sigma * z
}

/// Elementwise [`standardize`]; missing wherever any input is missing.
pub fn standardize_series(
    y: &[Option<f64>],
    mu: &[Option<f64>],
    sigma: &[Option<f64>],
) -> Vec<Option<f64>> {
    y.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((y, m), s)| Some(standardize((*y)?, (*m)?, (*s)?)))
        .collect()
}

/// Coefficients `a0..a4` of
/// `a0 + a1 cos(w t) + a2 sin(w t) + a3 cos(2 w t) + a4 sin(2 w t)`,
/// `w = 2 pi / 8766`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients(pub [f64; N_HARMONICS]);

fn basis(tau: f64) -> [f64; N_HARMONICS] {
    let w = 2.0 * PI * tau / HOURS_PER_YEAR as f64;
    [1.0, w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin()]
}

impl FourierCoefficients {
    pub fn eval(&self, tau: f64) -> f64 {
        basis(tau).iter().zip(&self.0).map(|(b, a)| a * b).sum()
    }

    /// Derivative in `tau` (per hour).
    pub fn slope(&self, tau: f64) -> f64 {
        let w0 = 2.0 * PI / HOURS_PER_YEAR as f64;
        let w = w0 * tau;
        let a = &self.0;
        w0 * (-a[1] * w.sin() + a[2] * w.cos())
            + 2.0 * w0 * (-a[3] * (2.0 * w).sin() + a[4] * (2.0 * w).cos())
    }

    pub fn year_curve(&self) -> Vec<f64> {
        (0..HOURS_PER_YEAR).map(|t| self.eval(t as f64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierFit {
    pub coefficients: FourierCoefficients,
    pub r2: f64,
}

/// Least-squares harmonic fit to one model year; missing hours are skipped.
pub fn fit_fourier_year(segment: &[Option<f64>]) -> Result<FourierFit> {
    if segment.len() != HOURS_PER_YEAR {
        return Err(Error::size(format!(
            "Fourier segment must have {HOURS_PER_YEAR} hours, got {}",
            segment.len()
        )));
    }
    let obs: Vec<(usize, f64)> = segment
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t, v)))
        .collect();
    if obs.len() < MIN_FOURIER_POINTS {
        return Err(Error::size(format!(
            "Fourier fit needs at least {MIN_FOURIER_POINTS} points, got {}",
            obs.len()
        )));
    }
    let x = DMatrix::from_fn(obs.len(), N_HARMONICS, |i, j| basis(obs[i].0 as f64)[j]);
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.1));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-8 * smax) {
        return Err(Error::fit("Fourier design matrix is rank deficient"));
    }
    let a = svd
        .solve(&y, 1e-12 * smax)
        .map_err(|e| Error::fit(format!("Fourier least squares failed: {e}")))?;
    let fitted = &x * &a;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(v, f)| (v - f).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let mut c = [0.0; N_HARMONICS];
    c.copy_from_slice(a.as_slice());
    Ok(FourierFit {
        coefficients: FourierCoefficients(c),
        r2,
    })
}

/// Evaluates each year's curve and joins them. Around every year boundary
/// the hours strictly inside `+-72 h` are replaced by a cubic Hermite patch
/// matching level and slope of both neighbouring curves at the window edges.
pub fn concat_smooth(years: &[FourierCoefficients]) -> Vec<f64> {
    let n = HOURS_PER_YEAR;
    let mut out: Vec<f64> = years.iter().flat_map(|c| c.year_curve()).collect();
    let h = PATCH_HALF_WIDTH;
    let span = (2 * h) as f64;
    for (k, pair) in years.windows(2).enumerate() {
        let (left, right) = (&pair[0], &pair[1]);
        if left == right {
            continue;
        }
        let boundary = (k + 1) * n;
        let t0 = (n - h) as f64;
        let t1 = h as f64;
        let (y0, m0) = (left.eval(t0), left.slope(t0) * span);
        let (y1, m1) = (right.eval(t1), right.slope(t1) * span);
        for i in 1..2 * h {
            let s = i as f64 / span;
            let s2 = s * s;
            let s3 = s2 * s;
            out[boundary - h + i] = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * m0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * m1;
        }
    }
    out
}

/// The four smoothed processes, in the order used by the coefficient vector.
pub const PROCESSES: [&str; 4] = ["mu_hm0", "sigma_hm0", "mu_tm02", "sigma_tm02"];
pub const N_COEFFICIENTS: usize = PROCESSES.len() * N_HARMONICS;

/// `"<process>.a<m>"` for index `process * 5 + m`.
pub fn coefficient_name(index: usize) -> String {
    format!(
        "{}.a{}",
        PROCESSES[index / N_HARMONICS],
        index % N_HARMONICS
    )
}

pub fn coefficient_index(name: &str) -> Option<usize> {
    let (proc, m) = name.split_once(".a")?;
    let p = PROCESSES.iter().position(|q| *q == proc)?;
    let m: usize = m.parse().ok()?;
    (m < N_HARMONICS).then_some(p * N_HARMONICS + m)
}

pub type CoefficientVector = [f64; N_COEFFICIENTS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMarginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub first: String,
    pub second: String,
    pub rho: f64,
}

/// Gaussian model of the 20 yearly Fourier coefficients: normal margins
/// and a sparse correlation matrix (identity plus listed entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub marginals: Vec<NormalMarginal>,
    pub correlations: Vec<Correlation>,
}

/// Pairs eligible for a correlation: the same harmonic in two different
/// processes. Distinct harmonics are orthogonal and stay uncorrelated.
pub fn testable_pairs() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in 0..PROCESSES.len() {
        for q in p + 1..PROCESSES.len() {
            for m in 0..N_HARMONICS {
                out.push((p * N_HARMONICS + m, q * N_HARMONICS + m));
            }
        }
    }
    out
}

impl CoefficientModel {
    pub fn new(means: &[f64], sds: &[f64], correlations: &[(usize, usize, f64)]) -> Result<Self> {
        if means.len() != N_COEFFICIENTS || sds.len() != N_COEFFICIENTS {
            return Err(Error::size(format!(
                "coefficient model needs {N_COEFFICIENTS} margins"
            )));
        }
        let m = Self {
            marginals: (0..N_COEFFICIENTS)
                .map(|i| NormalMarginal {
                    name: coefficient_name(i),
                    mean: means[i],
                    sd: sds[i],
                })
                .collect(),
            correlations: correlations
                .iter()
                .map(|&(a, b, rho)| Correlation {
                    first: coefficient_name(a),
                    second: coefficient_name(b),
                    rho,
                })
                .collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn means(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.mean).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sd).collect()
    }

    pub fn correlation_matrix(&self) -> Result<DMatrix<f64>> {
        let mut c = DMatrix::identity(N_COEFFICIENTS, N_COEFFICIENTS);
        for e in &self.correlations {
            let a = coefficient_index(&e.first)
                .ok_or_else(|| Error::invariant(format!("unknown coefficient {}", e.first)))?;
            let b = coefficient_index(&e.second)
                .ok_or_else(|| Error::invariant(format!("unknown coefficient {}", e.second)))?;
            if a == b || !(e.rho.abs() < 1.0) {
                return Err(Error::invariant(format!(
                    "bad correlation entry {} ~ {} = {}",
                    e.first, e.second, e.rho
                )));
            }
            c[(a, b)] = e.rho;
            c[(b, a)] = e.rho;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.len() != N_COEFFICIENTS {
            return Err(Error::invariant(format!(
                "coefficient model has {} margins, expected {N_COEFFICIENTS}",
                self.marginals.len()
            )));
        }
        for (i, m) in self.marginals.iter().enumerate() {
            if m.name != coefficient_name(i) {
                return Err(Error::invariant(format!(
                    "margin {i} is named {}, expected {}",
                    m.name,
                    coefficient_name(i)
                )));
            }
            if !(m.mean.is_finite() && m.sd.is_finite() && m.sd >= 0.0) {
                return Err(Error::invariant(format!(
                    "margin {} is not a valid normal",
                    m.name
                )));
            }
        }
        if self.correlation_matrix()?.cholesky().is_none() {
            return Err(Error::invariant(
                "coefficient correlation matrix is not positive definite",
            ));
        }
        Ok(())
    }

    /// Draws one coefficient vector per year.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n_years: usize,
        rng: &mut R,
    ) -> Result<Vec<CoefficientVector>> {
        let chol = self.correlation_matrix()?.cholesky().ok_or_else(|| {
            Error::invariant("coefficient correlation matrix is not positive definite")
        })?;
        let l = chol.l();
        let means = self.means();
        let sds = self.sds();
        Ok((0..n_years)
            .map(|_| {
                let z = DVector::from_fn(N_COEFFICIENTS, |_, _| StandardNormal.sample(rng));
                let x = &l * z;
                let mut out = [0.0; N_COEFFICIENTS];
                for i in 0..N_COEFFICIENTS {
                    out[i] = means[i] + sds[i] * x[i];
                }
                out
            })
            .collect())
    }
}

/// Normal MLE per coefficient, then a Kendall independence test on every
/// [`testable_pairs`] entry. Significant pairs keep their Pearson
/// correlation, shrunk by 0.95 steps until the matrix is positive definite.
/// With fewer than 10 years no pair can be tested and all stay at zero.
pub fn fit_coefficient_model(rows: &[CoefficientVector], alpha: f64) -> Result<CoefficientModel> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::size(format!(
            "coefficient model needs at least 3 years, got {n}"
        )));
    }
    let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i]).collect() };
    let mut means = Vec::with_capacity(N_COEFFICIENTS);
    let mut sds = Vec::with_capacity(N_COEFFICIENTS);
    for i in 0..N_COEFFICIENTS {
        let c = col(i);
        let m = c.iter().sum::<f64>() / n as f64;
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        means.push(m);
        sds.push(v.sqrt());
    }
    let mut entries = Vec::new();
    if n >= 10 {
        for (a, b) in testable_pairs() {
            let (x, y) = (col(a), col(b));
            // A constant column has no ranks to test.
            let Ok(test) = tau_independence_test(&x, &y, alpha) else {
                continue;
            };
            if !test.independent {
                let rho = pearson(&x, &y);
                if rho.is_finite() {
                    entries.push((a, b, rho.clamp(-0.99, 0.99)));
                }
            }
        }
    } else {
        log::warn!("only {n} years: coefficient correlations not tested");
    }
    loop {
        match CoefficientModel::new(&means, &sds, &entries) {
            Ok(m) => return Ok(m),
            Err(Error::Invariant(msg)) if msg.contains("positive definite") => {
                for e in &mut entries {
                    e.2 *= 0.95;
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Local mean and standard deviation series of one process.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalPair {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Forward evaluation of sampled coefficients into the `(Hm0, T~m02)`
/// seasonal pairs, `n_years * 8766` hours each.
pub fn build_seasonal_series(rows: &[CoefficientVector]) -> (SeasonalPair, SeasonalPair) {
    let take = |p: usize| -> Vec<FourierCoefficients> {
        rows.iter()
            .map(|r| {
                let mut c = [0.0; N_HARMONICS];
                c.copy_from_slice(&r[p * N_HARMONICS..(p + 1) * N_HARMONICS]);
                FourierCoefficients(c)
            })
            .collect()
    };
    let floor = |v: Vec<f64>| v.into_iter().map(|s| s.max(SIGMA_FLOOR)).collect();
    (
        SeasonalPair {
            mu: concat_smooth(&take(0)),
            sigma: floor(concat_smooth(&take(1))),
        },
        SeasonalPair {
            mu: concat_smooth(&take(2)),
            sigma: floor(concat_smooth(&take(3))),
        },
    )
}

/// Kernel decomposition of one normalized process plus its yearly
/// Fourier fits.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mu: Vec<Option<f64>>,
    pub sigma: Vec<Option<f64>>,
    pub z: Vec<Option<f64>>,
    pub mu_fits: Vec<FourierFit>,
    pub sigma_fits: Vec<FourierFit>,
    /// R^2 of the concatenated Fourier curves against the kernel series.
    pub mu_r2: f64,
    pub sigma_r2: f64,
}

fn r_squared(data: &[Option<f64>], fitted: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = data
        .iter()
        .zip(fitted)
        .filter_map(|(d, f)| d.map(|d| (d, *f)))
        .collect();
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len().max(1) as f64;
    let ss_tot: f64 = pairs.iter().map(|p| (p.0 - mean).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    }
}

pub fn decompose(y: &[Option<f64>], bandwidth: usize) -> Result<Decomposition> {
    if y.is_empty() || y.len() % HOURS_PER_YEAR != 0 {
        return Err(Error::size("decomposition needs whole model years"));
    }
    let mu = smooth_mean(y, bandwidth)?;
    let sigma = smooth_std(y, &mu, bandwidth)?;
    let z = standardize_series(y, &mu, &sigma);
    let fit_years = |s: &[Option<f64>]| -> Result<Vec<FourierFit>> {
        s.chunks(HOURS_PER_YEAR).map(fit_fourier_year).collect()
    };
    let mu_fits = fit_years(&mu)?;
    let sigma_fits = fit_years(&sigma)?;
    let coeffs = |f: &[FourierFit]| f.iter().map(|f| f.coefficients).collect::<Vec<_>>();
    let mu_r2 = r_squared(&mu, &concat_smooth(&coeffs(&mu_fits)));
    let sigma_r2 = r_squared(&sigma, &concat_smooth(&coeffs(&sigma_fits)));
    Ok(Decomposition {
        mu,
        sigma,
        z,
        mu_fits,
        sigma_fits,
        mu_r2,
        sigma_r2,
    })
}

/// Stacks yearly fits of the four processes into coefficient vectors.
pub fn coefficient_rows(hm0: &Decomposition, tm02: &Decomposition) -> Vec<CoefficientVector> {
    let parts = [
        &hm0.mu_fits,
        &hm0.sigma_fits,
        &tm02.mu_fits,
        &tm02.sigma_fits,
    ];
    (0..hm0.mu_fits.len())
        .map(|y| {
            let mut row = [0.0; N_COEFFICIENTS];
            for (p, fits) in parts.iter().enumerate() {
                row[p * N_HARMONICS..(p + 1) * N_HARMONICS]
                    .copy_from_slice(&fits[y].coefficients.0);
            }
            row
        })
        .collect()
}
