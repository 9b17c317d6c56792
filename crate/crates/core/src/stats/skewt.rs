//! Skewed Student-t distribution in the Fernandez-Steel form, standardized
//! so that `mu` is the mean and `sigma` the standard deviation
//! (`skew = 1` is the symmetric t, `shape` the degrees of freedom).

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::special::{student_t_cdf, student_t_ln_pdf, student_t_quantile, T_NORMAL_LIMIT};

/// Smallest admissible shape; finite variance needs `shape > 2`.
pub const MIN_SHAPE: f64 = 2.0 + 1e-3;
const MAX_SHAPE: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewTParams {
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
    pub shape: f64,
}

/// Quantities derived once per parameter set.
#[derive(Debug, Clone, Copy)]
struct Derived {
    /// Mean of the unscaled skewed variable.
    mu_s: f64,
    /// Standard deviation of the unscaled skewed variable.
    sigma_s: f64,
    /// Scale turning unit-variance t arguments into standard t arguments.
    t_scale: f64,
    ln_const: f64,
}

impl SkewTParams {
    pub fn new(mu: f64, sigma: f64, skew: f64, shape: f64) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            skew,
            shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::invariant("skew-t mu must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invariant(format!(
                "skew-t sigma {} must be > 0",
                self.sigma
            )));
        }
        if !(self.skew > 0.0 && self.skew.is_finite()) {
            return Err(Error::invariant(format!(
                "skew-t skew {} must be > 0",
                self.skew
            )));
        }
        if !(self.shape > 2.0) {
            return Err(Error::invariant(format!(
                "skew-t shape {} must be > 2",
                self.shape
            )));
        }
        Ok(())
    }

    fn derived(&self) -> Derived {
        let nu = self.shape;
        let xi = self.skew;
        let m1 = if nu > T_NORMAL_LIMIT {
            (2.0 / std::f64::consts::PI).sqrt()
        } else {
            (2.0 * (nu - 2.0).sqrt() / (nu - 1.0)) * (-ln_beta(0.5, 0.5 * nu)).exp()
        };
        let mu_s = m1 * (xi - 1.0 / xi);
        let sigma_s = ((1.0 - m1 * m1) * (xi * xi + 1.0 / (xi * xi)) + 2.0 * m1 * m1 - 1.0).sqrt();
        let t_scale = if nu > T_NORMAL_LIMIT {
            1.0
        } else {
            (nu / (nu - 2.0)).sqrt()
        };
        let g = 2.0 / (xi + 1.0 / xi);
        Derived {
            mu_s,
            sigma_s,
            t_scale,
            ln_const: g.ln() + sigma_s.ln() - self.sigma.ln() + t_scale.ln(),
        }
    }

    fn ln_pdf_with(&self, d: &Derived, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma * d.sigma_s + d.mu_s;
        let arg = if z < 0.0 {
            z * self.skew
        } else {
            z / self.skew
        };
        d.ln_const + student_t_ln_pdf(arg * d.t_scale, self.shape)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_pdf_with(&self.derived(), x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    fn std_cdf(&self, d: &Derived, z: f64) -> f64 {
        student_t_cdf(z * d.t_scale, self.shape)
    }

    fn std_quantile(&self, d: &Derived, p: f64) -> f64 {
        student_t_quantile(p, self.shape) / d.t_scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let d = self.derived();
        let xi = self.skew;
        let z = (x - self.mu) / self.sigma * d.sigma_s + d.mu_s;
        if z < 0.0 {
            2.0 / (xi * xi + 1.0) * self.std_cdf(&d, z * xi)
        } else {
            1.0 - 2.0 * xi * xi / (xi * xi + 1.0) * self.std_cdf(&d, -z / xi)
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let d = self.derived();
        let xi = self.skew;
        let p0 = 1.0 / (1.0 + xi * xi);
        let z = if p < p0 {
            self.std_quantile(&d, 0.5 * p * (1.0 + xi * xi)) / xi
        } else {
            // Written in the upper tail probability to keep precision near 1.
            let q = (1.0 - p) * (1.0 + xi * xi) / (2.0 * xi * xi);
            -xi * self.std_quantile(&d, q)
        };
        (z - d.mu_s) / d.sigma_s * self.sigma + self.mu
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u.max(f64::MIN_POSITIVE))
    }

    /// Summed log-density over a sample.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let d = self.derived();
        x.iter().map(|&v| self.ln_pdf_with(&d, v)).sum()
    }
}

fn from_free(v: &[f64]) -> SkewTParams {
    SkewTParams {
        mu: v[0],
        sigma: v[1].exp(),
        skew: v[2].exp(),
        shape: 2.0 + v[3].exp(),
    }
}

/// Maximum-likelihood fit. A symmetric t fit provides the starting point
/// for the four-parameter simplex search.
pub fn fit_skew_t(sample: &[f64]) -> Result<SkewTParams> {
    if sample.len() < 50 {
        return Err(Error::size(format!(
            "skew-t fit needs at least 50 points, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("skew-t sample contains non-finite values"));
    }
    let mean = super::mean(sample);
    let sd = super::std_dev(sample);
    if !(sd > 0.0) {
        return Err(Error::fit("skew-t sample has zero variance"));
    }
    let ln_min = (MIN_SHAPE - 2.0).ln();
    let ln_max = (MAX_SHAPE - 2.0).ln();
    let nll = |v: &[f64]| -> f64 {
        if v[3] < ln_min || v[3] > ln_max || v[2].abs() > 5.0 {
            return f64::INFINITY;
        }
        -from_free(v).log_likelihood(sample)
    };
    let opts = NelderMeadOptions {
        max_iter: 3000,
        f_tol: 1e-11,
        x_tol: 1e-7,
    };
    let sym = nelder_mead(
        |v: &[f64]| nll(&[v[0], v[1], 0.0, v[2]]),
        &[mean, sd.ln(), 2.0f64.ln()],
        &[0.1 * sd, 0.1, 0.5],
        opts,
    );
    let mut x = vec![sym.x[0], sym.x[1], 0.0, sym.x[2]];
    let mut best = f64::INFINITY;
    // Restarting the simplex guards against premature collapse.
    for _ in 0..4 {
        let m = nelder_mead(nll, &x, &[0.05 * sd, 0.05, 0.1, 0.3], opts);
        let improved = best - m.fx;
        x = m.x;
        best = m.fx;
        if improved.abs() < 1e-8 * (1.0 + best.abs()) {
            break;
        }
    }
    if !best.is_finite() {
        return Err(Error::fit("skew-t likelihood is not finite at the optimum"));
    }
    let mut p = from_free(&x);
    if p.shape <= MIN_SHAPE * (1.0 + 1e-6) {
        log::warn!("skew-t shape at its lower bound; clamped to {MIN_SHAPE}");
        p.shape = MIN_SHAPE;
    }
    p.validate().map_err(|e| Error::fit(e.to_string()))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{adaptive_simpson, normal_quantile};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn table6_h0() -> SkewTParams {
        SkewTParams::new(-0.01, 0.16, 1.07, 4.80).unwrap()
    }

    #[test]
    fn symmetric_heavy_shape_is_normal() {
        let p = SkewTParams::new(0.3, 2.0, 1.0, 1e6).unwrap();
        for &u in &[0.001, 0.05, 0.5, 0.9, 0.999] {
            let expect = 0.3 + 2.0 * normal_quantile(u);
            assert!((p.quantile(u) - expect).abs() < 1e-3, "u={u}");
        }
    }

    #[test]
    fn mean_and_sd_are_the_location_and_scale() {
        let p = SkewTParams::new(0.05, 0.35, 0.87, 5.58).unwrap();
        let lo = p.quantile(1e-9);
        let hi = p.quantile(1.0 - 1e-9);
        let mass = adaptive_simpson(&|x| p.pdf(x), lo, hi, 1e-12);
        let m1 = adaptive_simpson(&|x| x * p.pdf(x), lo, hi, 1e-12);
        let m2 = adaptive_simpson(&|x| (x - 0.05).powi(2) * p.pdf(x), lo, hi, 1e-12);
        assert!((mass - 1.0).abs() < 1e-6);
        assert!((m1 - 0.05).abs() < 1e-3);
        // Truncating heavy tails at 1e-9 loses a little variance.
        assert!((m2.sqrt() - 0.35).abs() < 5e-3);
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let p = table6_h0();
        let lo = p.quantile(1e-12);
        for &x in &[-0.3, -0.01, 0.0, 0.2] {
            let integral = adaptive_simpson(&|t| p.pdf(t), lo, x, 1e-13);
            assert!((integral - p.cdf(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn quantile_cdf_examples() {
        let p = SkewTParams::new(0.0, 1.0, 1.3, 6.0).unwrap();
        for x in [-1.0, 0.0, 2.0] {
            assert!((p.quantile(p.cdf(x)) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn refit_recovers_table6_parameters() {
        let truth = table6_h0();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let x: Vec<f64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
        let fit = fit_skew_t(&x).unwrap();
        assert!((fit.mu - truth.mu).abs() < 0.02, "{fit:?}");
        assert!((fit.sigma - truth.sigma).abs() < 0.02, "{fit:?}");
        assert!((fit.skew - truth.skew).abs() < 0.1, "{fit:?}");
        assert!((fit.shape - truth.shape).abs() < 1.0, "{fit:?}");
    }

    #[test]
    fn fit_needs_fifty_points() {
        assert!(matches!(fit_skew_t(&[0.0; 10]), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(
            skew in 0.5f64..2.0,
            shape in 2.5f64..40.0,
            u in 0.001f64..0.999,
        ) {
            let p = SkewTParams::new(0.1, 0.7, skew, shape).unwrap();
            let x = p.quantile(u);
            prop_assert!((p.cdf(x) - u).abs() < 1e-10);
            let q = p.quantile(p.cdf(x));
            prop_assert!((q - x).abs() < 1e-10 * (1.0 + x.abs()));
        }

        #[test]
        fn cdf_strictly_increasing(skew in 0.5f64..2.0, shape in 2.5f64..40.0, a in -3.0f64..3.0, d in 1e-3f64..1.0) {
            let p = SkewTParams::new(0.0, 1.0, skew, shape).unwrap();
            prop_assert!(p.cdf(a + d) > p.cdf(a));
        }
    }
}
