use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{bounds, CopulaSpec, Family, Rotation};
use crate::error::{Error, Result};
use crate::optim::{brent_minimize, nelder_mead, NelderMeadOptions};
use crate::special::{student_t_ln_pdf, student_t_quantile};
use crate::stats::tau_independence_test;

pub const MIN_PAIRS: usize = 30;

/// Level of the Kendall independence pre-test run before selection.
pub const INDEPENDENCE_ALPHA: f64 = 0.05;

/// A fitted copula with its maximized log-likelihood and `AIC = 2k - 2l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    #[serde(flatten)]
    pub spec: CopulaSpec,
    pub log_likelihood: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best: CopulaFit,
    /// Every successful candidate fit, sorted by AIC.
    pub table: Vec<CopulaFit>,
}

fn check_pairs(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::size(format!(
            "pseudo-observation lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.len() < MIN_PAIRS {
        return Err(Error::size(format!(
            "copula fit needs at least {MIN_PAIRS} pairs, got {}",
            u.len()
        )));
    }
    if u.iter().chain(v).any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::domain(
            "pseudo-observations must lie strictly inside (0, 1)",
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps an unconstrained coordinate into `[lo, hi]` and back.
fn to_box(x: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * sigmoid(x)
}

fn from_box(p: f64, (lo, hi): (f64, f64)) -> f64 {
    let s = ((p - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    logit(s)
}

fn make(family: Family, rotation: Rotation, p: &[f64]) -> CopulaSpec {
    CopulaSpec {
        family,
        rotation,
        par1: p.first().copied(),
        par2: p.get(1).copied(),
    }
}

fn neg_ll(spec: &CopulaSpec, u: &[f64], v: &[f64]) -> f64 {
    let ll = spec.log_likelihood(u, v);
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

/// Maximum-likelihood fit of one family at a fixed rotation.
pub fn fit_copula(u: &[f64], v: &[f64], family: Family, rotation: Rotation) -> Result<CopulaFit> {
    check_pairs(u, v)?;
    if !family.rotatable() && rotation != Rotation::R0 {
        return Err(Error::domain(format!(
            "{family} copula does not take a rotation"
        )));
    }
    let b = bounds(family);
    let params: Vec<f64> = match family {
        Family::Independence => vec![],
        Family::Gaussian | Family::Clayton | Family::Gumbel | Family::Joe => {
            let (lo, hi) = b[0];
            let f = |t: f64| neg_ll(&make(family, rotation, &[t]), u, v);
            vec![brent_minimize(f, lo, hi, 1e-7).0]
        }
        Family::Frank => {
            let (lo, hi) = b[0];
            // Zero is the independence limit, not a Frank parameter.
            let nz = |t: f64| {
                if t.abs() < 1e-6 {
                    1e-6f64.copysign(t)
                } else {
                    t
                }
            };
            let f = |t: f64| neg_ll(&make(family, rotation, &[nz(t)]), u, v);
            vec![nz(brent_minimize(f, lo, hi, 1e-7).0)]
        }
        Family::StudentT => fit_student_t(u, v, b)?,
        Family::Bb8 => fit_bb8(u, v, rotation, b),
    };
    let spec = make(family, rotation, &params);
    spec.validate()
        .map_err(|e| Error::fit(format!("{family} fit left the parameter domain: {e}")))?;
    let ll = spec.log_likelihood(u, v);
    if !ll.is_finite() {
        return Err(Error::fit(format!("{spec} has non-finite log-likelihood")));
    }
    let k = family.n_params() as f64;
    Ok(CopulaFit {
        spec,
        log_likelihood: ll,
        aic: 2.0 * k - 2.0 * ll,
    })
}

/// Profile likelihood: the t scores depend only on `nu`, so each outer step
/// inverts the margins once and maximizes over `rho` on the cached scores.
fn fit_student_t(u: &[f64], v: &[f64], b: &[(f64, f64)]) -> Result<Vec<f64>> {
    let n = u.len() as f64;
    let profile = |nu: f64| -> (f64, f64) {
        let x: Vec<f64> = u.iter().map(|&p| student_t_quantile(p, nu)).collect();
        let y: Vec<f64> = v.iter().map(|&p| student_t_quantile(p, nu)).collect();
        let margins: f64 = x.iter().chain(&y).map(|&t| student_t_ln_pdf(t, nu)).sum();
        let sq: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * a + b * b).collect();
        let cross: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let head = ln_gamma(0.5 * (nu + 2.0)) - ln_gamma(0.5 * nu) - (nu * PI).ln();
        let neg = |rho: f64| {
            let r2 = 1.0 - rho * rho;
            let quad: f64 = sq
                .iter()
                .zip(&cross)
                .map(|(s, c)| ((s - 2.0 * rho * c) / (nu * r2)).ln_1p())
                .sum();
            -(n * (head - 0.5 * r2.ln()) - 0.5 * (nu + 2.0) * quad - margins)
        };
        brent_minimize(neg, b[0].0, b[0].1, 1e-9)
    };
    let (ln_nu, _) = brent_minimize(|t| profile(t.exp()).1, b[1].0.ln(), b[1].1.ln(), 1e-6);
    let nu = ln_nu.exp().clamp(b[1].0, b[1].1);
    let (rho, nll) = profile(nu);
    if !nll.is_finite() {
        return Err(Error::fit("student_t profile likelihood is not finite"));
    }
    Ok(vec![rho, nu])
}

fn fit_bb8(u: &[f64], v: &[f64], rotation: Rotation, b: &[(f64, f64)]) -> Vec<f64> {
    let mut start = (f64::INFINITY, [2.0, 0.5]);
    for &theta in &[1.3, 2.0, 3.0, 5.0, 8.0] {
        for &delta in &[0.3, 0.6, 0.9] {
            let val = neg_ll(&make(Family::Bb8, rotation, &[theta, delta]), u, v);
            if val < start.0 {
                start = (val, [theta, delta]);
            }
        }
    }
    let x0 = [from_box(start.1[0], b[0]), from_box(start.1[1], b[1])];
    let obj = |x: &[f64]| {
        let p = [to_box(x[0], b[0]), to_box(x[1], b[1])];
        neg_ll(&make(Family::Bb8, rotation, &p), u, v)
    };
    let m = nelder_mead(
        obj,
        &x0,
        &[0.3, 0.3],
        NelderMeadOptions {
            max_iter: 600,
            f_tol: 1e-10,
            x_tol: 1e-7,
        },
    );
    vec![to_box(m.x[0], b[0]), to_box(m.x[1], b[1])]
}

/// Rotations tried for a family. Rotatable families only model one sign of
/// dependence, so the sign of the empirical tau picks the candidate pair.
pub fn candidate_rotations(family: Family, tau: f64) -> &'static [Rotation] {
    if !family.rotatable() {
        &[Rotation::R0]
    } else if tau >= 0.0 {
        &[Rotation::R0, Rotation::R180]
    } else {
        &[Rotation::R90, Rotation::R270]
    }
}

/// Fits every candidate family at its applicable rotations and returns the
/// minimum-AIC model together with the full table.
///
/// When independence is a candidate and the Kendall test does not reject it
/// at [`INDEPENDENCE_ALPHA`], independence is returned regardless of AIC.
pub fn select_copula(u: &[f64], v: &[f64], candidates: &[Family]) -> Result<Selection> {
    check_pairs(u, v)?;
    let test = tau_independence_test(u, v, INDEPENDENCE_ALPHA)?;
    let tau = test.tau;
    let mut jobs = Vec::new();
    for &fam in candidates {
        for &rot in candidate_rotations(fam, tau) {
            if !jobs.contains(&(fam, rot)) {
                jobs.push((fam, rot));
            }
        }
    }
    let mut table = Vec::new();
    let mut last_err = None;
    for (fam, rot) in jobs {
        match fit_copula(u, v, fam, rot) {
            Ok(f) => table.push(f),
            Err(e) => {
                log::debug!("copula candidate {fam}@{} skipped: {e}", rot.degrees());
                last_err = Some(e);
            }
        }
    }
    // Stable sort keeps candidate order on exact AIC ties.
    table.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    if test.independent {
        if let Some(ind) = table.iter().find(|f| f.spec.family == Family::Independence) {
            return Ok(Selection { best: *ind, table });
        }
    }
    let best = *table.first().ok_or_else(|| {
        Error::fit(format!(
            "every copula candidate failed{}",
            last_err.map(|e| format!(": {e}")).unwrap_or_default()
        ))
    })?;
    Ok(Selection { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn split(s: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
        s.into_iter().unzip()
    }

    #[test]
    fn frank_refit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (u, v) = split(CopulaSpec::frank(1.77).unwrap().sample(10_000, &mut rng));
        let f = fit_copula(&u, &v, Family::Frank, Rotation::R0).unwrap();
        assert!((f.spec.par1.unwrap() - 1.77).abs() < 0.15, "{}", f.spec);
        assert!((f.aic - (2.0 - 2.0 * f.log_likelihood)).abs() < 1e-12);
    }

    #[test]
    fn bb8_refit_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen = CopulaSpec::bb8(1.86, 0.68, Rotation::R0).unwrap();
        let (u, v) = split(gen.sample(10_000, &mut rng));
        let f = fit_copula(&u, &v, Family::Bb8, Rotation::R0).unwrap();
        assert!(
            (f.spec.tau() - 0.13).abs() < 0.02,
            "{} tau {}",
            f.spec,
            f.spec.tau()
        );
    }

    #[test]
    fn independent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (u, v) = split(CopulaSpec::independence().sample(5_000, &mut rng));
        let f = fit_copula(&u, &v, Family::Frank, Rotation::R0).unwrap();
        assert!(f.spec.tau().abs() < 0.03);
        let sel = select_copula(&u, &v, &Family::ALL).unwrap();
        assert_eq!(sel.best.spec.family, Family::Independence);
        assert_eq!(sel.best.aic, 0.0);
    }

    #[test]
    fn student_t_beats_gaussian_on_heavy_tails() {
        let gen = CopulaSpec::student_t(0.5, 4.0).unwrap();
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (u, v) = split(gen.sample(5_000, &mut rng));
            let sel = select_copula(&u, &v, &[Family::Gaussian, Family::StudentT]).unwrap();
            if sel.best.spec.family == Family::StudentT {
                wins += 1;
            }
        }
        assert!(wins >= 19, "{wins}/20");
    }

    #[test]
    fn survival_bb8_selects_survival_rotation() {
        let gen = CopulaSpec::bb8(2.74, 0.59, Rotation::R180).unwrap();
        let mut hits = 0;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (u, v) = split(gen.sample(5_000, &mut rng));
            let sel = select_copula(&u, &v, &Family::ALL).unwrap();
            if sel.best.spec.rotation == Rotation::R180 {
                hits += 1;
            }
        }
        assert!(hits >= 3, "{hits}/5");
    }

    #[test]
    fn swapping_margins_keeps_family() {
        let gen = CopulaSpec::new(Family::Clayton, Rotation::R90, &[2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (u, v) = split(gen.sample(3_000, &mut rng));
        let a = select_copula(&u, &v, &Family::ALL).unwrap();
        let b = select_copula(&v, &u, &Family::ALL).unwrap();
        assert_eq!(a.best.spec.family, b.best.spec.family);
        assert!((a.best.log_likelihood - b.best.log_likelihood).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let u = vec![0.5; 10];
        assert!(fit_copula(&u, &u, Family::Frank, Rotation::R0).is_err());
        let mut w = vec![0.5; 40];
        w[0] = 1.0;
        assert!(fit_copula(&w, &w, Family::Frank, Rotation::R0).is_err());
        let x = vec![0.5; 40];
        assert!(fit_copula(&x, &x, Family::Frank, Rotation::R90).is_err());
    }
}
