use crate::calendar::HOURS_PER_YEAR;
use crate::error::{Error, Result};
use crate::ingest::{HourlySeries, Regime};
use crate::rng::{substream, COEFFICIENTS, RENEWAL, RESIDUALS};
use crate::seasonal::build_seasonal_series;
use crate::special::normal_cdf;

use super::FittedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub series: HourlySeries,
    pub seed: u64,
    pub model_sha256: String,
}

/// Simulates `years` model years.
///
/// The regime path starts `ceil(burn_in / 8766)` whole years early so the
/// calendar stays aligned; those lead years condition the residuals of the
/// ARMA burn-in and are then dropped.
pub fn simulate(model: &FittedModel, years: usize, seed: u64) -> Result<SimulationOutput> {
    simulate_filtered(model, years, seed, |z| Ok(z))
}

/// [`simulate`] with `filter` applied to both ARMA output paths (after
/// burn-in) before they are combined with the seasonal components.
pub(crate) fn simulate_filtered<F>(
    model: &FittedModel,
    years: usize,
    seed: u64,
    filter: F,
) -> Result<SimulationOutput>
where
    F: Fn(Vec<f64>) -> Result<Vec<f64>>,
{
    if years == 0 {
        return Err(Error::domain("simulation needs at least one year"));
    }
    let n = years * HOURS_PER_YEAR;
    let burn_in = model.config.burn_in;
    let lead = burn_in.div_ceil(HOURS_PER_YEAR) * HOURS_PER_YEAR;

    let mut rng = substream(seed, RENEWAL);
    let initial = if rand::Rng::random::<bool>(&mut rng) {
        Regime::Southwest
    } else {
        Regime::North
    };
    let regimes = model.renewal.simulate(lead + n, initial, &mut rng);

    let rows = model
        .coefficients
        .sample(years, &mut substream(seed, COEFFICIENTS))?;
    let (sh, st) = build_seasonal_series(&rows);

    let (eps_h, eps_t) = model
        .residuals
        .sample_path(&regimes[lead - burn_in..], &mut substream(seed, RESIDUALS));
    let z_h = filter(model.arma_hm0.simulate(&eps_h, burn_in))?;
    let z_t = filter(model.arma_tm02.simulate(&eps_t, burn_in))?;

    let (lo_h, hi_h) = model.hm0_cdf.clamp_bounds();
    let (lo_t, hi_t) = model.tm02_detrended_cdf.clamp_bounds();
    let mut hm0 = Vec::with_capacity(n);
    let mut tm02 = Vec::with_capacity(n);
    for i in 0..n {
        let y_h = sh.mu[i] + sh.sigma[i] * z_h[i];
        let y_t = st.mu[i] + st.sigma[i] * z_t[i];
        let h = model.hm0_cdf.quantile(normal_cdf(y_h).clamp(lo_h, hi_h))?;
        let td = model
            .tm02_detrended_cdf
            .quantile(normal_cdf(y_t).clamp(lo_t, hi_t))?;
        hm0.push(Some(h));
        tm02.push(Some(model.steepness.restore_period(h, td)?));
    }
    Ok(SimulationOutput {
        series: HourlySeries {
            origin_year: 0,
            source_id: format!("simulated seed={seed}"),
            hm0,
            tm02,
            regime: regimes[lead..].iter().map(|r| Some(*r)).collect(),
        },
        seed,
        model_sha256: model.checksum()?,
    })
}
