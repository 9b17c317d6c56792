use sha2::{Digest, Sha256};

use super::{
    pair_label, ArmaDiagnostic, Diagnostics, FittedModel, Provenance, SeasonalR2, TauCheck,
    LJUNG_BOX_LAGS, SEASONAL_R2_TARGET,
};
use crate::arma::{fit_arma, ljung_box};
use crate::calendar::Season;
use crate::config::{RunConfig, MIN_YEARS};
use crate::error::{Error, Result};
use crate::ingest::{interpolate_short_gaps, HourlySeries, Regime};
use crate::renewal::{duration_pairs, extract_durations, fit_renewal, PairKind};
use crate::residuals::fit_residual_model;
use crate::seasonal::{coefficient_rows, decompose, fit_coefficient_model};
use crate::stats::{kendall_tau, pit_normalize, EmpiricalCdf};
use crate::steepness::{bin_max_steepness, fit_limit_curve, flag_anomalies};

fn series_sha256(s: &HourlySeries) -> String {
    let mut h = Sha256::new();
    let put = |h: &mut Sha256, v: Option<f64>| match v {
        Some(x) => h.update(x.to_le_bytes()),
        None => h.update([0xff; 8]),
    };
    for i in 0..s.len() {
        put(&mut h, s.hm0[i]);
        put(&mut h, s.tm02[i]);
        h.update([s.regime[i].map(|r| r.as_u8()).unwrap_or(0xff)]);
    }
    hex::encode(h.finalize())
}

fn max_of(v: &[Option<f64>]) -> f64 {
    v.iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn count_missing(s: &HourlySeries) -> usize {
    (0..s.len())
        .filter(|&i| s.hm0[i].is_none() && s.tm02[i].is_none() && s.regime[i].is_none())
        .count()
}

/// Fits every sub-model in order. A failing stage aborts with its name.
pub fn fit_all(series: &HourlySeries, config: &RunConfig) -> Result<FittedModel> {
    config.validate()?;
    series.validate().map_err(|e| e.in_stage("ingest"))?;
    if series.len() % crate::calendar::HOURS_PER_YEAR != 0 || series.years() < MIN_YEARS {
        return Err(Error::size(format!(
            "fitting needs at least {MIN_YEARS} whole model years, got {:.2}",
            series.len() as f64 / crate::calendar::HOURS_PER_YEAR as f64
        )));
    }
    let mut diag = Diagnostics::default();
    let before = count_missing(series);
    let mut s = interpolate_short_gaps(series, config.max_gap).map_err(|e| e.in_stage("ingest"))?;
    diag.gaps_filled = before - count_missing(&s);

    let curve = bin_max_steepness(&s, config.steepness_bins)
        .and_then(|b| fit_limit_curve(&b, config.b_upper))
        .map_err(|e| e.in_stage("steepness"))?;
    diag.anomalies_masked = flag_anomalies(&mut s, &curve);
    log::info!(
        "steepness a={:.5} b={:.4} c={:.5}, {} anomalies masked",
        curve.a,
        curve.b,
        curve.c,
        diag.anomalies_masked
    );

    let detrended: Vec<Option<f64>> = s
        .hm0
        .iter()
        .zip(&s.tm02)
        .map(|(h, t)| match (h, t) {
            (Some(h), Some(t)) if *h > 0.0 => curve.detrend_period(*h, *t).ok(),
            _ => None,
        })
        .collect();
    let hm0_cdf = EmpiricalCdf::new(&s.hm0.iter().flatten().copied().collect::<Vec<_>>())
        .map_err(|e| e.in_stage("normalize"))?;
    let t_cdf = EmpiricalCdf::new(&detrended.iter().flatten().copied().collect::<Vec<_>>())
        .map_err(|e| e.in_stage("normalize"))?;
    let y_h = pit_normalize(&s.hm0, &hm0_cdf);
    let y_t = pit_normalize(&detrended, &t_cdf);

    let dec_h = decompose(&y_h, config.bandwidth).map_err(|e| e.in_stage("decomposition"))?;
    let dec_t = decompose(&y_t, config.bandwidth).map_err(|e| e.in_stage("decomposition"))?;
    for (name, r2) in [
        ("mu_hm0", dec_h.mu_r2),
        ("sigma_hm0", dec_h.sigma_r2),
        ("mu_tm02", dec_t.mu_r2),
        ("sigma_tm02", dec_t.sigma_r2),
    ] {
        if r2 < SEASONAL_R2_TARGET {
            log::warn!(
                "seasonal fit of {name} explains {r2:.3} of variance (< {SEASONAL_R2_TARGET})"
            );
        }
        diag.seasonal_r2.push(SeasonalR2 {
            process: name.into(),
            r2,
            meets_target: r2 >= SEASONAL_R2_TARGET,
        });
    }
    let coefficients =
        fit_coefficient_model(&coefficient_rows(&dec_h, &dec_t), config.coefficient_alpha)
            .map_err(|e| e.in_stage("coefficients"))?;

    let arma_h = fit_arma(&dec_h.z, config.arma_hm0.p, config.arma_hm0.q)
        .map_err(|e| e.in_stage("arma_hm0"))?;
    let arma_t = fit_arma(&dec_t.z, config.arma_tm02.p, config.arma_tm02.q)
        .map_err(|e| e.in_stage("arma_tm02"))?;
    let e_h = arma_h
        .residuals(&dec_h.z)
        .map_err(|e| e.in_stage("arma_hm0"))?;
    let e_t = arma_t
        .residuals(&dec_t.z)
        .map_err(|e| e.in_stage("arma_tm02"))?;
    for (name, m, e) in [("hm0", &arma_h, &e_h), ("tm02", &arma_t, &e_t)] {
        let flat: Vec<f64> = e.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let lb = ljung_box(&flat, LJUNG_BOX_LAGS, m.p + m.q)
            .map_err(|e| e.in_stage("arma diagnostics"))?;
        diag.arma.push(ArmaDiagnostic {
            process: name.into(),
            p: m.p,
            q: m.q,
            aic: m.fit.as_ref().map(|f| f.aic).unwrap_or(f64::NAN),
            ljung_box: lb,
        });
    }

    let residuals = fit_residual_model(&e_h, &e_t, &s.regime, &config.copula_candidates)
        .map_err(|e| e.in_stage("residuals"))?;
    for r in [Regime::North, Regime::Southwest] {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..s.len())
            .filter_map(|i| match (e_h[i], e_t[i], s.regime[i]) {
                (Some(x), Some(y), Some(k)) if k == r => Some((x, y)),
                _ => None,
            })
            .unzip();
        diag.residual_tau.push(TauCheck {
            label: format!("regime {}", r.as_u8()),
            n_pairs: a.len(),
            empirical: kendall_tau(&a, &b)?,
            model: residuals.regime(r).copula.tau(),
        });
    }

    let records = extract_durations(&s.regime, &config.seasons);
    let renewal = fit_renewal(&records, &config.seasons, &config.copula_candidates)
        .map_err(|e| e.in_stage("renewal"))?;
    let pairs = duration_pairs(&records);
    for season in Season::ALL {
        for kind in [PairKind::NorthToSouthwest, PairKind::SouthwestToNorth] {
            let earlier = match kind {
                PairKind::NorthToSouthwest => Regime::North,
                PairKind::SouthwestToNorth => Regime::Southwest,
            };
            let (a, b): (Vec<f64>, Vec<f64>) = pairs
                .iter()
                .filter(|(e, l)| l.season == season && e.regime == earlier)
                .map(|(e, l)| (e.length as f64, l.length as f64))
                .unzip();
            diag.renewal_tau.push(TauCheck {
                label: pair_label(season, kind),
                n_pairs: a.len(),
                empirical: kendall_tau(&a, &b)?,
                model: renewal.season(season).copula(kind).tau(),
            });
        }
    }

    let model = FittedModel {
        provenance: Provenance {
            engine_version: env!("CARGO_PKG_VERSION").into(),
            source_id: series.source_id.clone(),
            origin_year: series.origin_year,
            years: series.years(),
            data_sha256: series_sha256(series),
            training_hm0_max: max_of(&s.hm0),
            training_tm02_max: max_of(&s.tm02),
        },
        config: config.clone(),
        steepness: curve,
        hm0_cdf,
        tm02_detrended_cdf: t_cdf,
        coefficients,
        arma_hm0: arma_h,
        arma_tm02: arma_t,
        residuals,
        renewal,
        diagnostics: diag,
    };
    model.validate()?;
    Ok(model)
}
