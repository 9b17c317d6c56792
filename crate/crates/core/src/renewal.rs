//! Seasonal alternating renewal process for the direction regime.
//!
//! Durations are modelled per season with empirical margins. Consecutive
//! durations are linked by a copula for `(N_{n-1}, SW_n)` and one for
//! `(SW_n, N_n)`, both indexed by the season of the later run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::{Season, SeasonCalendar, HOURS_PER_YEAR};
use crate::copula::{select_copula, CopulaSpec, Family, U_MIN};
use crate::error::{Error, Result};
use crate::ingest::Regime;
use crate::stats::{pseudo_observations_random_ties, EmpiricalCdf};

/// Minimum number of uncensored consecutive pairs per season and pair type.
pub const MIN_PAIRS_PER_SEASON: usize = 30;
const TIE_SEED: u64 = 0x7165;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationRecord {
    pub regime: Regime,
    pub length: usize,
    pub season: Season,
    /// Hour index of the run's first hour.
    pub start: usize,
    /// Position in the run sequence.
    pub index: usize,
    /// Touches a missing hour or an end of the series, so the true length
    /// is unknown.
    pub censored: bool,
}

/// Maximal constant-regime runs of `regime`. Missing hours split runs.
pub fn extract_durations(
    regime: &[Option<Regime>],
    calendar: &SeasonCalendar,
) -> Vec<DurationRecord> {
    let mut out: Vec<DurationRecord> = Vec::new();
    let mut t = 0;
    while t < regime.len() {
        let Some(r) = regime[t] else {
            t += 1;
            continue;
        };
        let start = t;
        while t < regime.len() && regime[t] == Some(r) {
            t += 1;
        }
        let censored =
            start == 0 || regime[start - 1].is_none() || t == regime.len() || regime[t].is_none();
        out.push(DurationRecord {
            regime: r,
            length: t - start,
            season: calendar.season_of(start % HOURS_PER_YEAR),
            start,
            index: out.len(),
            censored,
        });
    }
    out
}

/// Which ordered pair of consecutive durations a copula describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `(N_{n-1}, SW_n)`.
    NorthToSouthwest,
    /// `(SW_n, N_n)`.
    SouthwestToNorth,
}

impl PairKind {
    fn from_earlier(r: Regime) -> Self {
        match r {
            Regime::North => PairKind::NorthToSouthwest,
            Regime::Southwest => PairKind::SouthwestToNorth,
        }
    }
}

/// Consecutive uncensored, directly adjacent runs `(earlier, later)`.
pub fn duration_pairs(records: &[DurationRecord]) -> Vec<(DurationRecord, DurationRecord)> {
    records
        .windows(2)
        .filter(|w| !w[0].censored && !w[1].censored && w[0].start + w[0].length == w[1].start)
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonRenewal {
    pub season: Season,
    pub north: EmpiricalCdf,
    pub southwest: EmpiricalCdf,
    pub north_to_southwest: CopulaSpec,
    pub southwest_to_north: CopulaSpec,
}

impl SeasonRenewal {
    pub fn margin(&self, r: Regime) -> &EmpiricalCdf {
        match r {
            Regime::North => &self.north,
            Regime::Southwest => &self.southwest,
        }
    }

    pub fn copula(&self, kind: PairKind) -> &CopulaSpec {
        match kind {
            PairKind::NorthToSouthwest => &self.north_to_southwest,
            PairKind::SouthwestToNorth => &self.southwest_to_north,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalModel {
    pub calendar: SeasonCalendar,
    /// Spring, summer, autumn, winter.
    pub seasons: Vec<SeasonRenewal>,
}

impl RenewalModel {
    pub fn validate(&self) -> Result<()> {
        self.calendar.validate()?;
        if self.seasons.len() != 4 {
            return Err(Error::invariant(format!(
                "renewal model needs 4 seasons, got {}",
                self.seasons.len()
            )));
        }
        for (s, want) in self.seasons.iter().zip(Season::ALL) {
            if s.season != want {
                return Err(Error::invariant(format!(
                    "renewal seasons out of order: found {} where {want} belongs",
                    s.season
                )));
            }
            for m in [&s.north, &s.southwest] {
                if m.min() < 1.0 {
                    return Err(Error::invariant(format!(
                        "{want} duration margin has values below 1 hour"
                    )));
                }
            }
            s.north_to_southwest.validate()?;
            s.southwest_to_north.validate()?;
        }
        Ok(())
    }

    pub fn season(&self, s: Season) -> &SeasonRenewal {
        &self.seasons[s.index()]
    }

    fn season_at(&self, hour: usize) -> &SeasonRenewal {
        self.season(self.calendar.season_of(hour % HOURS_PER_YEAR))
    }

    /// Duration in whole hours at probability `u` of a season's margin.
    pub fn duration_at(margin: &EmpiricalCdf, u: f64) -> usize {
        let x = margin.quantile_interpolated(u);
        ((x + 0.5).floor() as usize).max(1)
    }

    /// Simulates `n_hours` regime values starting at hour 0 of a model year.
    /// The first run is drawn from its margin alone; each later run is drawn
    /// from the copula of its pair type given the previous run's latent
    /// probability. The last run is truncated at `n_hours`.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        n_hours: usize,
        initial: Regime,
        rng: &mut R,
    ) -> Vec<Regime> {
        let mut out = Vec::with_capacity(n_hours);
        let mut regime = initial;
        let mut prev_u: Option<f64> = None;
        while out.len() < n_hours {
            let season = self.season_at(out.len());
            let w: f64 = rng.random::<f64>().clamp(U_MIN, 1.0 - U_MIN);
            let u = match prev_u {
                None => w,
                Some(up) => season
                    .copula(PairKind::from_earlier(regime.other()))
                    .h1_inv(w, up)
                    .clamp(U_MIN, 1.0 - U_MIN),
            };
            let len = Self::duration_at(season.margin(regime), u);
            let take = len.min(n_hours - out.len());
            out.extend(std::iter::repeat_n(regime, take));
            prev_u = Some(u);
            regime = regime.other();
        }
        out
    }
}

/// Fits margins and selects both pair copulas for every season.
pub fn fit_renewal(
    records: &[DurationRecord],
    calendar: &SeasonCalendar,
    candidates: &[Family],
) -> Result<RenewalModel> {
    let pairs = duration_pairs(records);
    // Durations are integers with many ties; ties are broken from a fixed
    // stream so the fit stays deterministic.
    let mut ties = crate::rng::substream(TIE_SEED, "renewal ties");
    let mut seasons = Vec::with_capacity(4);
    for season in Season::ALL {
        let durations = |r: Regime| -> Result<EmpiricalCdf> {
            let d: Vec<f64> = records
                .iter()
                .filter(|x| !x.censored && x.season == season && x.regime == r)
                .map(|x| x.length as f64)
                .collect();
            EmpiricalCdf::new(&d).map_err(|_| {
                Error::size(format!("{season}: fewer than 2 uncensored {r:?} durations"))
            })
        };
        let north = durations(Regime::North)?;
        let southwest = durations(Regime::Southwest)?;
        let mut copulas = Vec::with_capacity(2);
        for kind in [PairKind::NorthToSouthwest, PairKind::SouthwestToNorth] {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs
                .iter()
                .filter(|(e, l)| l.season == season && PairKind::from_earlier(e.regime) == kind)
                .map(|(e, l)| (e.length as f64, l.length as f64))
                .unzip();
            if a.len() < MIN_PAIRS_PER_SEASON {
                return Err(Error::size(format!(
                    "{season}: {} {kind:?} duration pairs, need at least {MIN_PAIRS_PER_SEASON}",
                    a.len()
                )));
            }
            let ua = pseudo_observations_random_ties(&a, &mut ties);
            let ub = pseudo_observations_random_ties(&b, &mut ties);
            let sel = select_copula(&ua, &ub, candidates).map_err(|e| {
                log::error!("renewal copula {season} {kind:?} failed");
                e.in_stage("renewal copula")
            })?;
            log::info!(
                "renewal {season} {kind:?}: {} (tau {:.3}) from {} pairs",
                sel.best.spec,
                sel.best.spec.tau(),
                a.len()
            );
            copulas.push(sel.best.spec);
        }
        seasons.push(SeasonRenewal {
            season,
            north,
            southwest,
            north_to_southwest: copulas[0],
            southwest_to_north: copulas[1],
        });
    }
    let m = RenewalModel {
        calendar: calendar.clone(),
        seasons,
    };
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::Rotation;
    use crate::stats::{kendall_tau, ks_two_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn regimes(v: &[u8]) -> Vec<Option<Regime>> {
        v.iter()
            .map(|&x| Some(Regime::try_from(x).unwrap()))
            .collect()
    }

    fn margin(v: &[f64]) -> EmpiricalCdf {
        EmpiricalCdf::new(v).unwrap()
    }

    fn uniform_model(copula: CopulaSpec, north: &[f64], sw: &[f64]) -> RenewalModel {
        RenewalModel {
            calendar: SeasonCalendar::default(),
            seasons: Season::ALL
                .iter()
                .map(|&season| SeasonRenewal {
                    season,
                    north: margin(north),
                    southwest: margin(sw),
                    north_to_southwest: copula,
                    southwest_to_north: copula,
                })
                .collect(),
        }
    }

    #[test]
    fn hand_enumerated_runs() {
        let r = extract_durations(&regimes(&[0, 0, 1, 1, 1, 0]), &SeasonCalendar::default());
        let got: Vec<(Regime, usize)> = r.iter().map(|d| (d.regime, d.length)).collect();
        assert_eq!(
            got,
            vec![
                (Regime::North, 2),
                (Regime::Southwest, 3),
                (Regime::North, 1)
            ]
        );
        assert!(r[0].censored && !r[1].censored && r[2].censored);
        assert_eq!(r[1].start, 2);
    }

    #[test]
    fn single_regime_and_missing_blocks() {
        let r = extract_durations(&regimes(&[1; 10]), &SeasonCalendar::default());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].length, 10);
        let mut s = regimes(&[0, 1, 1, 0, 0, 1, 0]);
        s[3] = None;
        let r = extract_durations(&s, &SeasonCalendar::default());
        let lens: Vec<usize> = r.iter().map(|d| d.length).collect();
        assert_eq!(lens, vec![1, 2, 1, 1, 1]);
        assert!(r[1].censored && r[2].censored);
        assert!(!r[3].censored);
        assert!(duration_pairs(&r).is_empty());
    }

    #[test]
    fn season_of_first_hour() {
        let march = crate::calendar::MONTH_START[2];
        let mut v = vec![Some(Regime::North); march + 5];
        v[march - 1] = Some(Regime::Southwest);
        for x in &mut v[march..] {
            *x = Some(Regime::Southwest);
        }
        let r = extract_durations(&v, &SeasonCalendar::default());
        assert_eq!(r[1].season, Season::Winter);
        assert_eq!(r[1].start, march - 1);
        let r = extract_durations(&v[1..], &SeasonCalendar::default());
        let last = r.last().unwrap();
        assert_eq!(last.start, march - 2);
    }

    #[test]
    fn unit_durations_alternate_hourly() {
        let m = uniform_model(CopulaSpec::independence(), &[1.0, 1.0], &[1.0, 1.0]);
        let s = m.simulate(100, Regime::North, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s.len(), 100);
        for (t, r) in s.iter().enumerate() {
            assert_eq!(r.index(), t % 2);
        }
    }

    #[test]
    fn simulated_length_is_exact_and_alternating() {
        let m = uniform_model(
            CopulaSpec::frank(3.0).unwrap(),
            &[1.0, 5.0, 30.0],
            &[2.0, 10.0, 80.0],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 7, 1000, 9999] {
            let s = m.simulate(n, Regime::Southwest, &mut rng);
            assert_eq!(s.len(), n);
            assert_eq!(s[0], Regime::Southwest);
        }
    }

    #[test]
    fn winter_copula_tau_is_reproduced() {
        let bb8 = CopulaSpec::bb8(2.74, 0.59, Rotation::R180).unwrap();
        let north: Vec<f64> = (1..=400).map(|v| v as f64).collect();
        let m = uniform_model(bb8, &north, &north);
        let s = m.simulate(
            HOURS_PER_YEAR * 300,
            Regime::North,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        let r = extract_durations(&s.iter().map(|&x| Some(x)).collect::<Vec<_>>(), &m.calendar);
        let pairs: Vec<(f64, f64)> = duration_pairs(&r)
            .iter()
            .filter(|(e, _)| e.regime == Regime::North)
            .map(|(e, l)| (e.length as f64, l.length as f64))
            .take(10_000)
            .collect();
        assert!(pairs.len() >= 5000, "{}", pairs.len());
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let tau = kendall_tau(&a, &b).unwrap();
        // Model tau 0.19; discretization of a 400-point margin is negligible.
        assert!((tau - bb8.tau()).abs() < 0.03, "{tau} vs {}", bb8.tau());
    }

    #[test]
    fn margins_match_fitted_cdf() {
        // Empirical margin with many one-hour runs, as in observed data.
        let mut sample = vec![1.0; 300];
        sample.extend((2..=200).map(|v| v as f64));
        let m = uniform_model(CopulaSpec::frank(2.0).unwrap(), &sample, &sample);
        let s = m.simulate(
            HOURS_PER_YEAR * 120,
            Regime::North,
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        let r = extract_durations(&s.iter().map(|&x| Some(x)).collect::<Vec<_>>(), &m.calendar);
        let sim: Vec<f64> = r
            .iter()
            .filter(|d| !d.censored && d.season == Season::Summer)
            .map(|d| d.length as f64)
            .take(10_000)
            .collect();
        assert!(sim.len() >= 5000);
        // Oracle: the interpolated quantile rounded half-up, at a fine
        // uniform grid, is the exact law of a simulated duration.
        let grid: Vec<f64> = (1..20_000)
            .map(|i| RenewalModel::duration_at(&m.seasons[1].north, i as f64 / 20_000.0) as f64)
            .collect();
        let ks = ks_two_sample(&sim, &grid).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    fn synthetic_records(copula: CopulaSpec, seed: u64) -> Vec<DurationRecord> {
        let sample: Vec<f64> = (1..=60).map(|v| v as f64).collect();
        let m = uniform_model(copula, &sample, &sample);
        let s = m.simulate(
            HOURS_PER_YEAR * 12,
            Regime::North,
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        extract_durations(&s.iter().map(|&x| Some(x)).collect::<Vec<_>>(), &m.calendar)
    }

    #[test]
    fn fit_recovers_dependence_sign_and_null() {
        let r = synthetic_records(CopulaSpec::frank(4.0).unwrap(), 5);
        let fit = fit_renewal(&r, &SeasonCalendar::default(), &Family::ALL).unwrap();
        for s in &fit.seasons {
            assert!(s.north_to_southwest.tau() > 0.2, "{}", s.north_to_southwest);
        }
        let r = synthetic_records(CopulaSpec::independence(), 6);
        let fit = fit_renewal(&r, &SeasonCalendar::default(), &Family::ALL).unwrap();
        for s in &fit.seasons {
            for k in [PairKind::NorthToSouthwest, PairKind::SouthwestToNorth] {
                assert!(s.copula(k).tau().abs() < 0.05, "{}", s.copula(k));
            }
        }
    }

    #[test]
    fn undersized_season_is_named() {
        let r = synthetic_records(CopulaSpec::independence(), 7);
        let cut: Vec<DurationRecord> = r
            .into_iter()
            .filter(|d| d.season != Season::Autumn || d.index % 20 == 0)
            .collect();
        let err = fit_renewal(&cut, &SeasonCalendar::default(), &Family::ALL).unwrap_err();
        assert!(err.to_string().contains("autumn"), "{err}");
    }

    #[test]
    fn model_serde_round_trip() {
        let m = uniform_model(CopulaSpec::frank(1.77).unwrap(), &[1.0, 3.0], &[2.0, 4.0]);
        let json = serde_json::to_string(&m).unwrap();
        let back: RenewalModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        back.validate().unwrap();
    }
}
