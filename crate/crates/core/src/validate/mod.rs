//! Validation diagnostics comparing an observed and a simulated series:
//! seasonal direction shares, storm persistence and annual densities.

mod density;

pub use density::{
    contour, density_report, inside, kde_2d, ContourSet, DensityCurves, DensityReport, Envelope,
    Grid2, Variable, CONTOUR_LEVELS, MAX_CONTOUR_YEARS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{Season, SeasonCalendar, HOURS_PER_YEAR};
use crate::error::{Error, Result};
use crate::ingest::{HourlySeries, Regime};
use crate::stats::{ks_two_sample, quantile, quantile_sorted, KsResult};

pub const REPORT_SCHEMA_VERSION: &str = "wavesim-validate/1";
pub const DEFAULT_QUANTILES: [f64; 6] = [0.8, 0.9, 0.95, 0.965, 0.975, 0.99];

/// South-westerly share of the non-missing hours of each season, one row
/// per model year. `None` where a season has no regime data that year.
pub fn season_percentages(
    regime: &[Option<Regime>],
    calendar: &SeasonCalendar,
) -> Result<Vec<[Option<f64>; 4]>> {
    let years = regime.len() / HOURS_PER_YEAR;
    if years == 0 {
        return Err(Error::size(
            "season percentages need at least one whole year",
        ));
    }
    let season_of: Vec<usize> = (0..HOURS_PER_YEAR)
        .map(|h| calendar.season_of(h).index())
        .collect();
    Ok((0..years)
        .map(|y| {
            let mut sw = [0usize; 4];
            let mut total = [0usize; 4];
            for h in 0..HOURS_PER_YEAR {
                if let Some(r) = regime[y * HOURS_PER_YEAR + h] {
                    total[season_of[h]] += 1;
                    sw[season_of[h]] += (r == Regime::Southwest) as usize;
                }
            }
            std::array::from_fn(|s| (total[s] > 0).then(|| sw[s] as f64 / total[s] as f64))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StormThresholds {
    pub h_star: f64,
    pub t_star: f64,
    /// Quantile level the thresholds were read at, if any.
    pub quantile: Option<f64>,
}

impl StormThresholds {
    pub fn new(h_star: f64, t_star: f64, quantile: Option<f64>) -> Result<Self> {
        if !(h_star > 0.0 && t_star > 0.0 && h_star.is_finite() && t_star.is_finite()) {
            return Err(Error::domain(format!(
                "storm thresholds must be positive, got h* = {h_star}, t* = {t_star}"
            )));
        }
        Ok(Self {
            h_star,
            t_star,
            quantile,
        })
    }

    /// Univariate quantiles of the non-missing hm0 and tm02 values.
    pub fn from_quantile(series: &HourlySeries, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "threshold quantile {p} outside (0, 1)"
            )));
        }
        let h: Vec<f64> = series.hm0.iter().flatten().copied().collect();
        let t: Vec<f64> = series.tm02.iter().flatten().copied().collect();
        Self::new(quantile(&h, p)?, quantile(&t, p)?, Some(p))
    }
}

/// Maximal run of hours with both variables at or above threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StormEvent {
    pub start: usize,
    pub duration: usize,
    pub peak_hm0: f64,
    pub peak_tm02: f64,
}

/// Storms and the below-threshold runs around them.
///
/// Missing hours end both run types. A below-threshold run counts as an
/// interarrival only when storms bound it on both sides; runs touching the
/// series edge or a missing hour are boundary segments. Together they tile
/// the series: storm hours + interarrivals + boundary + missing = length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StormExtraction {
    pub storms: Vec<StormEvent>,
    pub interarrivals: Vec<usize>,
    pub boundary: Vec<usize>,
    pub missing: usize,
}

impl StormExtraction {
    pub fn durations(&self) -> Vec<usize> {
        self.storms.iter().map(|s| s.duration).collect()
    }

    pub fn covered_hours(&self) -> usize {
        self.storms.iter().map(|s| s.duration).sum::<usize>()
            + self.interarrivals.iter().sum::<usize>()
            + self.boundary.iter().sum::<usize>()
            + self.missing
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Hour {
    Storm,
    Calm,
    Missing,
}

pub fn extract_storms(
    hm0: &[Option<f64>],
    tm02: &[Option<f64>],
    th: &StormThresholds,
) -> StormExtraction {
    let n = hm0.len().min(tm02.len());
    let kind = |i: usize| match (hm0[i], tm02[i]) {
        (Some(h), Some(t)) if h >= th.h_star && t >= th.t_star => Hour::Storm,
        (Some(_), Some(_)) => Hour::Calm,
        _ => Hour::Missing,
    };
    let mut out = StormExtraction::default();
    let mut i = 0;
    // What ended the previous run: a storm or not (edge / missing).
    let mut after_storm = false;
    while i < n {
        let k = kind(i);
        let mut j = i + 1;
        while j < n && kind(j) == k {
            j += 1;
        }
        match k {
            Hour::Missing => {
                out.missing += j - i;
                after_storm = false;
            }
            Hour::Storm => {
                let (mut ph, mut pt) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for x in i..j {
                    ph = ph.max(hm0[x].unwrap_or(ph));
                    pt = pt.max(tm02[x].unwrap_or(pt));
                }
                out.storms.push(StormEvent {
                    start: i,
                    duration: j - i,
                    peak_hm0: ph,
                    peak_tm02: pt,
                });
                after_storm = true;
            }
            Hour::Calm => {
                let before_storm = j < n && kind(j) == Hour::Storm;
                if after_storm && before_storm {
                    out.interarrivals.push(j - i);
                } else {
                    out.boundary.push(j - i);
                }
                after_storm = false;
            }
        }
        i = j;
    }
    out
}

pub fn extract_storms_series(s: &HourlySeries, th: &StormThresholds) -> StormExtraction {
    extract_storms(&s.hm0, &s.tm02, th)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountBand {
    pub window_years: usize,
    pub counts: Vec<usize>,
    pub q05: f64,
    pub q95: f64,
}

impl CountBand {
    pub fn contains(&self, count: usize) -> bool {
        (count as f64) >= self.q05 && (count as f64) <= self.q95
    }
}

/// Storm counts in disjoint `window_years` segments of a simulation and
/// their empirical 5 % and 95 % quantiles. Storms are counted within each
/// segment, so a storm straddling a segment edge counts in both.
pub fn storm_count_band(
    sim: &HourlySeries,
    window_years: usize,
    th: &StormThresholds,
) -> Result<CountBand> {
    if window_years == 0 {
        return Err(Error::domain(
            "storm count window must be at least one year",
        ));
    }
    let w = window_years * HOURS_PER_YEAR;
    let segments = sim.len() / w;
    if segments < 2 {
        return Err(Error::size(format!(
            "storm count band needs at least 2 windows of {window_years} years, simulation has {segments}"
        )));
    }
    let counts: Vec<usize> = (0..segments)
        .into_par_iter()
        .map(|k| {
            let r = k * w..(k + 1) * w;
            extract_storms(&sim.hm0[r.clone()], &sim.tm02[r], th)
                .storms
                .len()
        })
        .collect();
    let mut sorted: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(CountBand {
        window_years,
        q05: quantile_sorted(&sorted, 0.05)?,
        q95: quantile_sorted(&sorted, 0.95)?,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(x: &[usize]) -> Option<Self> {
        if x.is_empty() {
            return None;
        }
        let mut s: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        s.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&s, p).expect("nonempty, p in [0, 1]");
        Some(Self {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ks {
    pub statistic: f64,
    pub p_value: f64,
}

impl From<KsResult> for Ks {
    fn from(r: KsResult) -> Self {
        Self {
            statistic: r.statistic,
            p_value: r.p_value,
        }
    }
}

fn ks_usize(a: &[usize], b: &[usize]) -> Option<Ks> {
    let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    ks_two_sample(&fa, &fb).ok().map(Ks::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormBlock {
    pub thresholds: StormThresholds,
    pub observed_count: usize,
    /// Absent when the simulation holds fewer than two observed-length windows.
    pub band: Option<CountBand>,
    pub observed_in_band: Option<bool>,
    pub observed_durations: Vec<usize>,
    pub observed_interarrivals: Vec<usize>,
    pub simulated_durations: Option<Summary>,
    pub simulated_interarrivals: Option<Summary>,
    pub durations_ks: Option<Ks>,
    pub interarrivals_ks: Option<Ks>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonShare {
    pub season: Season,
    pub observed: Vec<Option<f64>>,
    pub simulated: Vec<Option<f64>>,
    pub simulated_q05: Option<f64>,
    pub simulated_q95: Option<f64>,
    /// Two-sample KS test of observed against simulated yearly shares.
    pub ks: Option<Ks>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySection {
    pub all: DensityReport,
    pub north: Option<DensityReport>,
    pub southwest: Option<DensityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: String,
    pub percentages: Vec<SeasonShare>,
    pub storms: Vec<StormBlock>,
    pub densities: DensitySection,
}

fn share_block(
    season: Season,
    obs: &[[Option<f64>; 4]],
    sim: &[[Option<f64>; 4]],
) -> Result<SeasonShare> {
    let col =
        |rows: &[[Option<f64>; 4]]| rows.iter().map(|r| r[season.index()]).collect::<Vec<_>>();
    let (o, s) = (col(obs), col(sim));
    let of: Vec<f64> = o.iter().flatten().copied().collect();
    let sf: Vec<f64> = s.iter().flatten().copied().collect();
    let (q05, q95) = if sf.is_empty() {
        (None, None)
    } else {
        (Some(quantile(&sf, 0.05)?), Some(quantile(&sf, 0.95)?))
    };
    Ok(SeasonShare {
        season,
        ks: ks_two_sample(&of, &sf).ok().map(Ks::from),
        observed: o,
        simulated: s,
        simulated_q05: q05,
        simulated_q95: q95,
    })
}

/// Every diagnostic for one observed / simulated pair. Thresholds come
/// from the observed series; the count window is the observed length.
pub fn validation_report(
    observed: &HourlySeries,
    simulated: &HourlySeries,
    quantiles: &[f64],
    calendar: &SeasonCalendar,
) -> Result<ValidationReport> {
    let window = observed.years();
    if window == 0 || simulated.years() == 0 {
        return Err(Error::size(
            "validation needs at least one whole year of each series",
        ));
    }
    let obs_pct = season_percentages(&observed.regime, calendar)?;
    let sim_pct = season_percentages(&simulated.regime, calendar)?;
    let percentages = Season::ALL
        .iter()
        .map(|&s| share_block(s, &obs_pct, &sim_pct))
        .collect::<Result<Vec<_>>>()?;

    let storms = quantiles
        .iter()
        .map(|&p| {
            let th = StormThresholds::from_quantile(observed, p)?;
            let obs = extract_storms_series(observed, &th);
            let sim = extract_storms_series(simulated, &th);
            let band = if simulated.years() >= 2 * window {
                Some(storm_count_band(simulated, window, &th)?)
            } else {
                log::warn!(
                    "simulation shorter than two {window}-year windows; no storm count band"
                );
                None
            };
            Ok(StormBlock {
                thresholds: th,
                observed_count: obs.storms.len(),
                observed_in_band: band.as_ref().map(|b| b.contains(obs.storms.len())),
                band,
                durations_ks: ks_usize(&obs.durations(), &sim.durations()),
                interarrivals_ks: ks_usize(&obs.interarrivals, &sim.interarrivals),
                simulated_durations: Summary::of(&sim.durations()),
                simulated_interarrivals: Summary::of(&sim.interarrivals),
                observed_durations: obs.durations(),
                observed_interarrivals: obs.interarrivals,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let conditioned = |r: Regime| density_report(observed, simulated, Some(r)).ok();
    let densities = DensitySection {
        all: density_report(observed, simulated, None)?,
        north: conditioned(Regime::North),
        southwest: conditioned(Regime::Southwest),
    };
    Ok(ValidationReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        percentages,
        storms,
        densities,
    })
}
