//! Regime-switching joint law of the two ARMA innovation series: skew-t
//! margins and a copula for each direction regime.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{select_copula, CopulaSpec, Family};
use crate::error::{Error, Result};
use crate::ingest::Regime;
use crate::stats::{fit_skew_t, pseudo_observations, SkewTParams};

pub const MIN_PAIRS_PER_REGIME: usize = 1000;
/// Sanity bound on the absolute location of a residual margin, in units of
/// its scale.
pub const MAX_LOCATION_IN_SCALES: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeResiduals {
    pub hm0: SkewTParams,
    pub tm02: SkewTParams,
    pub copula: CopulaSpec,
}

impl RegimeResiduals {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("hm0", &self.hm0), ("tm02", &self.tm02)] {
            m.validate()?;
            if m.mu.abs() > MAX_LOCATION_IN_SCALES * m.sigma {
                return Err(Error::invariant(format!(
                    "{name} residual location {} is implausible for scale {}",
                    m.mu, m.sigma
                )));
            }
        }
        self.copula.validate()
    }

    /// One draw `(e_hm0, e_tm02)`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (u, v) = self.copula.sample_pair(rng);
        (self.hm0.quantile(u), self.tm02.quantile(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualModel {
    pub north: RegimeResiduals,
    pub southwest: RegimeResiduals,
}

impl ResidualModel {
    pub fn regime(&self, r: Regime) -> &RegimeResiduals {
        match r {
            Regime::North => &self.north,
            Regime::Southwest => &self.southwest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.north.validate()?;
        self.southwest.validate()
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, regime: Regime, rng: &mut R) -> (f64, f64) {
        self.regime(regime).sample_pair(rng)
    }

    /// Innovation streams for a simulated regime path, drawn hour by hour
    /// under that hour's regime.
    pub fn sample_path<R: Rng + ?Sized>(
        &self,
        regimes: &[Regime],
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>) {
        regimes.iter().map(|&r| self.sample_pair(r, rng)).unzip()
    }
}

/// Fits margins and selects the copula per regime. Hours where any input is
/// missing are skipped.
pub fn fit_residual_model(
    e_hm0: &[Option<f64>],
    e_tm02: &[Option<f64>],
    regimes: &[Option<Regime>],
    candidates: &[Family],
) -> Result<ResidualModel> {
    if e_hm0.len() != e_tm02.len() || e_hm0.len() != regimes.len() {
        return Err(Error::size(format!(
            "residual inputs differ in length: {}, {}, {}",
            e_hm0.len(),
            e_tm02.len(),
            regimes.len()
        )));
    }
    let fit_one = |want: Regime| -> Result<RegimeResiduals> {
        let (a, b): (Vec<f64>, Vec<f64>) = e_hm0
            .iter()
            .zip(e_tm02)
            .zip(regimes)
            .filter_map(|((x, y), r)| match (x, y, r) {
                (Some(x), Some(y), Some(r)) if *r == want => Some((*x, *y)),
                _ => None,
            })
            .unzip();
        if a.len() < MIN_PAIRS_PER_REGIME {
            return Err(Error::size(format!(
                "regime {} has {} residual pairs, need at least {MIN_PAIRS_PER_REGIME}",
                want.as_u8(),
                a.len()
            )));
        }
        let hm0 = fit_skew_t(&a).map_err(|e| e.in_stage("hm0 residual margin"))?;
        let tm02 = fit_skew_t(&b).map_err(|e| e.in_stage("tm02 residual margin"))?;
        let sel = select_copula(
            &pseudo_observations(&a),
            &pseudo_observations(&b),
            candidates,
        )
        .map_err(|e| e.in_stage("residual copula"))?;
        log::info!(
            "residuals regime {}: hm0 {hm0:?}, tm02 {tm02:?}, copula {} (tau {:.3})",
            want.as_u8(),
            sel.best.spec,
            sel.best.spec.tau()
        );
        let out = RegimeResiduals {
            hm0,
            tm02,
            copula: sel.best.spec,
        };
        out.validate()?;
        Ok(out)
    };
    Ok(ResidualModel {
        north: fit_one(Regime::North)?,
        southwest: fit_one(Regime::Southwest)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{kendall_tau, ks_one_sample, mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn regime1() -> RegimeResiduals {
        RegimeResiduals {
            hm0: SkewTParams::new(-0.01, 0.16, 1.07, 4.80).unwrap(),
            tm02: SkewTParams::new(0.05, 0.35, 0.87, 5.58).unwrap(),
            copula: CopulaSpec::student_t(-0.23, 6.36).unwrap(),
        }
    }

    fn model() -> ResidualModel {
        let mut north = regime1();
        north.copula = CopulaSpec::student_t(-0.09, 5.53).unwrap();
        ResidualModel {
            north,
            southwest: regime1(),
        }
    }

    fn draws(m: &RegimeResiduals, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| m.sample_pair(&mut rng)).unzip()
    }

    #[test]
    fn regime1_tau_matches_elliptical_identity() {
        let (a, b) = draws(&regime1(), 100_000, 1);
        let tau = kendall_tau(&a, &b).unwrap();
        let oracle = 2.0 / std::f64::consts::PI * (-0.23f64).asin();
        assert!((tau - oracle).abs() < 0.01, "{tau} vs {oracle}");
    }

    #[test]
    fn independence_gives_zero_tau() {
        let mut m = regime1();
        m.copula = CopulaSpec::independence();
        let (a, b) = draws(&m, 100_000, 2);
        assert!(kendall_tau(&a, &b).unwrap().abs() < 0.01);
    }

    #[test]
    fn margins_follow_their_skew_t() {
        let m = regime1();
        let (a, b) = draws(&m, 100_000, 3);
        assert!(ks_one_sample(&a, |x| m.hm0.cdf(x)).unwrap().p_value > 0.01);
        assert!(ks_one_sample(&b, |x| m.tm02.cdf(x)).unwrap().p_value > 0.01);
        assert!(a.iter().chain(&b).all(|v| v.is_finite()));
    }

    #[test]
    fn sample_moments_match_model() {
        // Oracle: the skew-t mean and variance by numerical integration of
        // the density.
        let m = regime1();
        let (a, _) = draws(&m, 100_000, 4);
        let (lo, hi, k) = (-20.0, 20.0, 400_000);
        let dx = (hi - lo) / k as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..k {
            let x = lo + (i as f64 + 0.5) * dx;
            let p = m.hm0.pdf(x) * dx;
            m1 += x * p;
            m2 += x * x * p;
        }
        let var = m2 - m1 * m1;
        assert!((mean(&a) - m1).abs() < 4.0 * (var / 1e5).sqrt());
        assert!((variance(&a) / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn round_trip_refit() {
        let truth = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let regimes: Vec<Regime> = (0..n)
            .map(|t| {
                if (t / 37) % 3 == 0 {
                    Regime::North
                } else {
                    Regime::Southwest
                }
            })
            .collect();
        let (a, b) = truth.sample_path(&regimes, &mut rng);
        let opt = |x: Vec<f64>| x.into_iter().map(Some).collect::<Vec<_>>();
        let reg: Vec<Option<Regime>> = regimes.iter().map(|r| Some(*r)).collect();
        let fit = fit_residual_model(&opt(a.clone()), &opt(b.clone()), &reg, &Family::ALL).unwrap();
        let c = fit.southwest.copula;
        assert_eq!(c.family, Family::StudentT, "{c}");
        assert!((c.par1.unwrap() + 0.23).abs() < 0.02, "{c}");
        let h = fit.southwest.hm0;
        assert!(
            (h.sigma - 0.16).abs() < 0.01 && (h.skew - 1.07).abs() < 0.05,
            "{h:?}"
        );
        // PIT through the fitted margins is uniform.
        let sw: Vec<f64> = a
            .iter()
            .zip(&regimes)
            .filter(|(_, r)| **r == Regime::Southwest)
            .map(|(x, _)| *x)
            .collect();
        let pit: Vec<f64> = sw.iter().map(|x| h.cdf(*x)).collect();
        assert!(ks_one_sample(&pit, |u| u.clamp(0.0, 1.0)).unwrap().p_value > 0.01);
    }

    #[test]
    fn undersized_regime_is_rejected() {
        let n = 1500;
        let e: Vec<Option<f64>> = (0..n).map(|i| Some((i as f64 * 0.37).sin())).collect();
        let reg: Vec<Option<Regime>> = (0..n)
            .map(|i| {
                Some(if i < 1200 {
                    Regime::Southwest
                } else {
                    Regime::North
                })
            })
            .collect();
        let err = fit_residual_model(&e, &e, &reg, &Family::ALL).unwrap_err();
        assert!(err.to_string().contains("regime 0"), "{err}");
    }

    #[test]
    fn serde_round_trip() {
        let m = model();
        let back: ResidualModel =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        back.validate().unwrap();
    }
}
