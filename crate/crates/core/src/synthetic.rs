//! A fully specified reference model with fixed nominal parameter values,
//! used to generate training data for round-trip checks.
//!
//! Marginal laws that would come from data in a real fit (wave height, detrended
//! period, regime durations) are replaced by smooth stand-ins: Weibull
//! shapes matched to nominal threshold quantiles and zero-inflated
//! Weibull durations whose seasonal means put the most south-westerly time
//! in spring and the least in autumn.

use crate::arma::ArmaModel;
use crate::calendar::{Season, SeasonCalendar};
use crate::config::RunConfig;
use crate::copula::{frank_tau, CopulaSpec, Rotation};
use crate::error::Result;
use crate::optim::brent_root;
use crate::pipeline::simulate::{simulate_filtered, SimulationOutput};
use crate::pipeline::{Diagnostics, FittedModel, Provenance};
use crate::renewal::{RenewalModel, SeasonRenewal};
use crate::residuals::{RegimeResiduals, ResidualModel};
use crate::seasonal::{
    coefficient_index, smooth_mean, smooth_std, standardize_series, CoefficientModel,
    N_COEFFICIENTS,
};
use crate::stats::{EmpiricalCdf, SkewTParams};
use crate::steepness::SteepnessCurve;

/// Points in each stand-in empirical margin.
const MARGIN_POINTS: usize = 20_000;
const DURATION_POINTS: usize = 600;
/// Long-run share of south-westerly hours, used to pool the two regime
/// residual laws. Close to the reference renewal model's share.
const SOUTHWEST_SHARE: f64 = 0.6;

fn weibull_q(p: f64, shape: f64, scale: f64) -> f64 {
    scale * (-(1.0 - p).ln()).powf(1.0 / shape)
}

fn grid_margin(n: usize, q: impl Fn(f64) -> f64) -> EmpiricalCdf {
    let v: Vec<f64> = (1..=n).map(|i| q(i as f64 / (n + 1) as f64)).collect();
    EmpiricalCdf::new(&v).expect("grid margins have many finite points")
}

/// Integer durations: one hour with probability `p_one`, otherwise
/// `1 + round(Weibull(shape, scale))`.
pub fn duration_margin(p_one: f64, shape: f64, scale: f64) -> EmpiricalCdf {
    grid_margin(DURATION_POINTS, |p| {
        if p < p_one {
            1.0
        } else {
            1.0 + weibull_q((p - p_one) / (1.0 - p_one), shape, scale).round()
        }
    })
}

/// Frank parameter with the given Kendall's tau.
pub fn frank_for_tau(tau: f64) -> f64 {
    brent_root(|t| frank_tau(t) - tau, 1e-4, 30.0, 1e-12).expect("tau in (0, 0.9) is bracketed")
}

pub fn reference_steepness() -> SteepnessCurve {
    SteepnessCurve::new(0.0782, 9.994, 0.07674).expect("nominal parameters are valid")
}

pub fn reference_coefficients() -> CoefficientModel {
    // Rows mu_hm0, sigma_hm0, mu_tm02, sigma_tm02; columns a0..a4.
    #[rustfmt::skip]
    let table: [[(f64, f64); 5]; 4] = [
        [(0.0, 0.09), (0.39, 0.09), (-0.10, 0.12), (0.03, 0.08), (-0.03, 0.10)],
        [(0.91, 0.05), (0.01, 0.05), (0.0, 0.06), (-0.01, 0.03), (0.01, 0.05)],
        [(0.0, 0.10), (-0.21, 0.06), (0.14, 0.1), (-0.03, 0.04), (0.0, 0.07)],
        [(0.96, 0.04), (0.0, 0.04), (0.03, 0.03), (-0.01, 0.02), (0.0, 0.03)],
    ];
    let mut means = vec![0.0; N_COEFFICIENTS];
    let mut sds = vec![0.0; N_COEFFICIENTS];
    for (p, row) in table.iter().enumerate() {
        for (m, (mean, sd)) in row.iter().enumerate() {
            means[p * 5 + m] = *mean;
            sds[p * 5 + m] = *sd;
        }
    }
    let idx = |s: &str| coefficient_index(s).expect("known coefficient name");
    CoefficientModel::new(
        &means,
        &sds,
        &[
            (idx("sigma_hm0.a0"), idx("sigma_tm02.a0"), -0.7),
            (idx("mu_tm02.a1"), idx("sigma_tm02.a1"), 0.6),
            (idx("mu_hm0.a2"), idx("mu_tm02.a2"), -0.5),
        ],
    )
    .expect("nominal correlations form a PD matrix")
}

/// Nominal ARMA coefficients. `sigma2` holds the pooled innovation
/// variance of [`reference_residuals`].
pub fn reference_arma() -> (ArmaModel, ArmaModel) {
    let (h, t) = nominal_arma();
    let residuals = reference_residuals().expect("nominal residual laws are valid");
    let sw = |m: &ArmaModel, pick: fn(&RegimeResiduals) -> SkewTParams| {
        ArmaModel::new(
            m.ar.clone(),
            m.ma.clone(),
            0.0,
            pooled_variance(pick(&residuals.north), pick(&residuals.southwest)),
        )
        .expect("stationary")
    };
    (sw(&h, |r| r.hm0), sw(&t, |r| r.tm02))
}

fn nominal_arma() -> (ArmaModel, ArmaModel) {
    (
        ArmaModel::new(vec![1.07, 0.10, -0.18], vec![], 0.0, 1.0).expect("stationary"),
        ArmaModel::new(vec![2.63, -2.54, 0.89], vec![-1.62, 0.83], 0.0, 1.0).expect("stationary"),
    )
}

/// Variance of the regime mixture of two innovation laws.
fn pooled_variance(north: SkewTParams, southwest: SkewTParams) -> f64 {
    let w = SOUTHWEST_SHARE;
    let mean = (1.0 - w) * north.mu + w * southwest.mu;
    (1.0 - w) * (north.sigma.powi(2) + north.mu.powi(2))
        + w * (southwest.sigma.powi(2) + southwest.mu.powi(2))
        - mean * mean
}

fn scaled(p: SkewTParams, k: f64) -> Result<SkewTParams> {
    SkewTParams::new(k * p.mu, k * p.sigma, p.skew, p.shape)
}

/// Nominal residual laws, rescaled per process so that the ARMA output
/// has unit stationary variance. The fit standardizes every process to
/// unit variance, so an uncalibrated generator would produce data whose
/// margins disagree with its own stand-in CDFs: with the rounded
/// near-unit-root coefficients the raw scales inflate the variance of the
/// Hm0 process about 1.7-fold.
pub fn reference_residuals() -> Result<ResidualModel> {
    let raw = nominal_residuals()?;
    let (arma_h, arma_t) = nominal_arma();
    let k_h = (arma_h.variance_gain() * pooled_variance(raw.north.hm0, raw.southwest.hm0))
        .sqrt()
        .recip();
    let k_t = (arma_t.variance_gain() * pooled_variance(raw.north.tm02, raw.southwest.tm02))
        .sqrt()
        .recip();
    let calibrate = |r: &RegimeResiduals| -> Result<RegimeResiduals> {
        Ok(RegimeResiduals {
            hm0: scaled(r.hm0, k_h)?,
            tm02: scaled(r.tm02, k_t)?,
            copula: r.copula,
        })
    };
    Ok(ResidualModel {
        north: calibrate(&raw.north)?,
        southwest: calibrate(&raw.southwest)?,
    })
}

/// Nominal residual margins and copulas before calibration.
pub fn nominal_residuals() -> Result<ResidualModel> {
    Ok(ResidualModel {
        north: RegimeResiduals {
            hm0: SkewTParams::new(-0.01, 0.16, 1.07, 4.80)?,
            tm02: SkewTParams::new(0.05, 0.35, 0.87, 5.58)?,
            copula: CopulaSpec::student_t(-0.09, 5.53)?,
        },
        southwest: RegimeResiduals {
            hm0: SkewTParams::new(0.01, 0.17, 1.13, 5.36)?,
            tm02: SkewTParams::new(-0.04, 0.43, 0.90, 5.52)?,
            copula: CopulaSpec::student_t(-0.23, 6.36)?,
        },
    })
}

/// Nominal seasonal copulas of consecutive durations,
/// `(N_{n-1}, SW_n)` then `(SW_n, N_n)`.
pub fn reference_duration_copulas(season: Season) -> Result<(CopulaSpec, CopulaSpec)> {
    Ok(match season {
        Season::Spring => (
            CopulaSpec::bb8(1.86, 0.68, Rotation::R0)?,
            CopulaSpec::frank(frank_for_tau(0.08))?,
        ),
        Season::Summer => (
            CopulaSpec::bb8(1.52, 0.81, Rotation::R0)?,
            CopulaSpec::bb8(1.41, 0.85, Rotation::R0)?,
        ),
        Season::Autumn => (CopulaSpec::frank(1.77)?, CopulaSpec::frank(0.99)?),
        Season::Winter => (
            CopulaSpec::bb8(2.74, 0.59, Rotation::R180)?,
            CopulaSpec::frank(1.02)?,
        ),
    })
}

pub fn reference_renewal() -> Result<RenewalModel> {
    // (p_one, shape, scale) for N then SW.
    let margins = |s: Season| match s {
        Season::Spring => ((0.25, 0.8, 30.0), (0.2, 0.8, 70.0)),
        Season::Summer => ((0.25, 0.8, 35.0), (0.2, 0.8, 55.0)),
        Season::Autumn => ((0.25, 0.8, 45.0), (0.2, 0.8, 40.0)),
        Season::Winter => ((0.25, 0.8, 40.0), (0.2, 0.8, 50.0)),
    };
    let mut seasons = Vec::with_capacity(4);
    for s in Season::ALL {
        let ((p0, k0, l0), (p1, k1, l1)) = margins(s);
        let (a, b) = reference_duration_copulas(s)?;
        seasons.push(SeasonRenewal {
            season: s,
            north: duration_margin(p0, k0, l0),
            southwest: duration_margin(p1, k1, l1),
            north_to_southwest: a,
            southwest_to_north: b,
        });
    }
    let m = RenewalModel {
        calendar: SeasonCalendar::default(),
        seasons,
    };
    m.validate()?;
    Ok(m)
}

/// The complete reference model.
pub fn reference_model() -> Result<FittedModel> {
    let hm0_cdf = grid_margin(MARGIN_POINTS, |p| 0.2 + weibull_q(p, 1.5, 1.2));
    let t_cdf = grid_margin(MARGIN_POINTS, |p| weibull_q(p, 1.6, 1.4));
    let (arma_hm0, arma_tm02) = reference_arma();
    let steepness = reference_steepness();
    let training_tm02_max = steepness.restore_period(hm0_cdf.max(), t_cdf.max())?;
    let m = FittedModel {
        provenance: Provenance {
            engine_version: env!("CARGO_PKG_VERSION").into(),
            source_id: "reference".into(),
            origin_year: 0,
            years: 0,
            data_sha256: String::new(),
            training_hm0_max: hm0_cdf.max(),
            training_tm02_max,
        },
        config: RunConfig::default(),
        steepness,
        hm0_cdf,
        tm02_detrended_cdf: t_cdf,
        coefficients: reference_coefficients(),
        arma_hm0,
        arma_tm02,
        residuals: reference_residuals()?,
        renewal: reference_renewal()?,
        diagnostics: Diagnostics::default(),
    };
    m.validate()?;
    Ok(m)
}

/// Real-like observations from `model`: as `pipeline::simulate`, except that each
/// ARMA path is replaced by its kernel-standardized residual before the
/// seasonal components are applied.
///
/// Recorded series are decomposed into a kernel mean and deviation plus a
/// high-frequency residual, and only the residual is modelled as ARMA. Raw
/// ARMA output with near-unit-root coefficients carries monthly-scale power
/// that the kernel mean would absorb as non-harmonic seasonality, so the
/// yearly harmonics would explain far less of the seasonal series than they
/// do in recorded data.
pub fn observations(model: &FittedModel, years: usize, seed: u64) -> Result<SimulationOutput> {
    let bandwidth = model.config.bandwidth;
    simulate_filtered(model, years, seed, |z| {
        let z: Vec<Option<f64>> = z.into_iter().map(Some).collect();
        let mu = smooth_mean(&z, bandwidth)?;
        let sigma = smooth_std(&z, &mu, bandwidth)?;
        Ok(standardize_series(&z, &mu, &sigma)
            .into_iter()
            .map(|v| v.expect("complete input has complete kernel statistics"))
            .collect())
    })
}
