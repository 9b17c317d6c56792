//! Unrotated copula families. Every family here is exchangeable, so the
//! conditional `h(u | v) = dC/dv` also serves as `h(v | u)` with the
//! arguments swapped.

use statrs::function::gamma::ln_gamma;

use crate::optim::brent_root;
use crate::special::{
    adaptive_simpson, normal_cdf, normal_quantile, student_t_cdf, student_t_quantile,
};

/// Arguments are kept inside `[U_MIN, 1 - U_MIN]`.
pub const U_MIN: f64 = 1e-12;

pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(U_MIN, 1.0 - U_MIN)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Base {
    Independence,
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64 },
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Frank { theta: f64 },
    Joe { theta: f64 },
    Bb8 { theta: f64, delta: f64 },
}

impl Base {
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        match *self {
            Base::Independence => u * v,
            Base::Gaussian { .. } | Base::StudentT { .. } => {
                // C(u, v) = integral of h(u | s) over s in [0, v].
                let f = |s: f64| self.h(u, clamp_unit(s));
                adaptive_simpson(&f, 0.0, v, 1e-11).clamp(0.0, u.min(v))
            }
            Base::Clayton { theta } => (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta),
            Base::Gumbel { theta } => {
                let a = (-u.ln()).powf(theta) + (-v.ln()).powf(theta);
                (-a.powf(1.0 / theta)).exp()
            }
            Base::Frank { theta } => {
                if theta.abs() < 1e-10 {
                    return u * v;
                }
                let num = (-theta * u).exp_m1() * (-theta * v).exp_m1();
                -((num / (-theta).exp_m1()).ln_1p()) / theta
            }
            Base::Joe { theta } => {
                let a = (1.0 - u).powf(theta);
                let b = (1.0 - v).powf(theta);
                1.0 - (a + b - a * b).powf(1.0 / theta)
            }
            Base::Bb8 { theta, delta } => {
                let eta = 1.0 - (1.0 - delta).powf(theta);
                let x = 1.0 - (1.0 - delta * u).powf(theta);
                let y = 1.0 - (1.0 - delta * v).powf(theta);
                (1.0 - (1.0 - x * y / eta).powf(1.0 / theta)) / delta
            }
        }
    }

    pub fn ln_pdf(&self, u: f64, v: f64) -> f64 {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        match *self {
            Base::Independence => 0.0,
            Base::Gaussian { rho } => {
                let x = normal_quantile(u);
                let y = normal_quantile(v);
                let r2 = 1.0 - rho * rho;
                -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
            }
            Base::StudentT { rho, nu } => {
                let x = student_t_quantile(u, nu);
                let y = student_t_quantile(v, nu);
                t_ln_pdf_at(rho, nu, x, y)
            }
            Base::Clayton { theta } => {
                let (lu, lv) = (u.ln(), v.ln());
                let s = (-theta * lu).exp() + (-theta * lv).exp() - 1.0;
                (1.0 + theta).ln() - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * s.ln()
            }
            Base::Gumbel { theta } => {
                let (lu, lv) = (-u.ln(), -v.ln());
                let a = lu.powf(theta) + lv.powf(theta);
                let a1 = a.powf(1.0 / theta);
                -a1 + (theta - 1.0) * (lu.ln() + lv.ln())
                    + lu
                    + lv
                    + (1.0 / theta - 2.0) * a.ln()
                    + (a1 + theta - 1.0).ln()
            }
            Base::Frank { theta } => {
                if theta.abs() < 1e-10 {
                    return 0.0;
                }
                let k = (-theta).exp_m1();
                let a = (-theta * u).exp_m1();
                let b = (-theta * v).exp_m1();
                (-theta * k).ln() - theta * (u + v) - 2.0 * (k + a * b).abs().ln()
            }
            Base::Joe { theta } => {
                let (ub, vb) = (1.0 - u, 1.0 - v);
                let a = ub.powf(theta);
                let b = vb.powf(theta);
                let s = a + b - a * b;
                (1.0 / theta - 2.0) * s.ln()
                    + (theta - 1.0) * (ub.ln() + vb.ln())
                    + (theta - 1.0 + s).ln()
            }
            Base::Bb8 { theta, delta } => {
                let eta = 1.0 - (1.0 - delta).powf(theta);
                let pu = (1.0 - delta * u).powf(theta);
                let pv = (1.0 - delta * v).powf(theta);
                let x = 1.0 - pu;
                let y = 1.0 - pv;
                let w = 1.0 - x * y / eta;
                (theta * delta / eta).ln()
                    + (theta - 1.0) * ((1.0 - delta * u).ln() + (1.0 - delta * v).ln())
                    + (1.0 / theta - 2.0) * w.ln()
                    + (1.0 - x * y / (theta * eta)).ln()
            }
        }
    }

    /// Conditional distribution `h(u | v) = dC(u, v) / dv`.
    pub fn h(&self, u: f64, v: f64) -> f64 {
        let u = clamp_unit(u);
        let v = clamp_unit(v);
        let h = match *self {
            Base::Independence => u,
            Base::Gaussian { rho } => {
                let x = normal_quantile(u);
                let y = normal_quantile(v);
                normal_cdf((x - rho * y) / (1.0 - rho * rho).sqrt())
            }
            Base::StudentT { rho, nu } => {
                let x = student_t_quantile(u, nu);
                let y = student_t_quantile(v, nu);
                let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                student_t_cdf((x - rho * y) / scale, nu + 1.0)
            }
            Base::Clayton { theta } => {
                let s = u.powf(-theta) + v.powf(-theta) - 1.0;
                (-(theta + 1.0) * v.ln() - (1.0 + 1.0 / theta) * s.ln()).exp()
            }
            Base::Gumbel { theta } => {
                let (lu, lv) = (-u.ln(), -v.ln());
                let a = lu.powf(theta) + lv.powf(theta);
                let a1 = a.powf(1.0 / theta);
                (-a1 + (1.0 / theta - 1.0) * a.ln() + (theta - 1.0) * lv.ln() + lv).exp()
            }
            Base::Frank { theta } => {
                if theta.abs() < 1e-10 {
                    return u;
                }
                let k = (-theta).exp_m1();
                let a = (-theta * u).exp_m1();
                let b = (-theta * v).exp_m1();
                (-theta * v).exp() * a / (k + a * b)
            }
            Base::Joe { theta } => {
                let (ub, vb) = (1.0 - u, 1.0 - v);
                let a = ub.powf(theta);
                let b = vb.powf(theta);
                let s = a + b - a * b;
                s.powf(1.0 / theta - 1.0) * vb.powf(theta - 1.0) * (1.0 - a)
            }
            Base::Bb8 { theta, delta } => {
                let eta = 1.0 - (1.0 - delta).powf(theta);
                let x = 1.0 - (1.0 - delta * u).powf(theta);
                let y = 1.0 - (1.0 - delta * v).powf(theta);
                let w = 1.0 - x * y / eta;
                x / eta * (1.0 - delta * v).powf(theta - 1.0) * w.powf(1.0 / theta - 1.0)
            }
        };
        h.clamp(0.0, 1.0)
    }

    /// Inverse of [`h`](Self::h) in its first argument.
    pub fn h_inv(&self, p: f64, v: f64) -> f64 {
        let p = clamp_unit(p);
        let v = clamp_unit(v);
        match *self {
            Base::Independence => p,
            Base::Gaussian { rho } => {
                let y = normal_quantile(v);
                normal_cdf(normal_quantile(p) * (1.0 - rho * rho).sqrt() + rho * y)
            }
            Base::StudentT { rho, nu } => {
                let y = student_t_quantile(v, nu);
                let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                student_t_cdf(student_t_quantile(p, nu + 1.0) * scale + rho * y, nu)
            }
            Base::Clayton { theta } => {
                let t = (p * v.powf(theta + 1.0)).powf(-theta / (theta + 1.0));
                (t + 1.0 - v.powf(-theta)).powf(-1.0 / theta)
            }
            Base::Frank { theta } => {
                if theta.abs() < 1e-10 {
                    return p;
                }
                let k = (-theta).exp_m1();
                let ev = (-theta * v).exp();
                -(p * k / (ev * (1.0 - p) + p)).ln_1p() / theta
            }
            Base::Gumbel { .. } | Base::Joe { .. } | Base::Bb8 { .. } => self.h_inv_numeric(p, v),
        }
        .clamp(U_MIN, 1.0 - U_MIN)
    }

    fn h_inv_numeric(&self, p: f64, v: f64) -> f64 {
        let (lo, hi) = (U_MIN, 1.0 - U_MIN);
        if p <= self.h(lo, v) {
            return lo;
        }
        if p >= self.h(hi, v) {
            return hi;
        }
        brent_root(|u| self.h(u, v) - p, lo, hi, 1e-15).unwrap_or(p)
    }

    /// Kendall's tau.
    pub fn tau(&self) -> f64 {
        match *self {
            Base::Independence => 0.0,
            Base::Gaussian { rho } | Base::StudentT { rho, .. } => {
                2.0 / std::f64::consts::PI * rho.asin()
            }
            Base::Clayton { theta } => theta / (theta + 2.0),
            Base::Gumbel { theta } => 1.0 - 1.0 / theta,
            Base::Frank { theta } => frank_tau(theta),
            Base::Joe { theta } => bb8_tau(theta, 1.0),
            Base::Bb8 { theta, delta } => bb8_tau(theta, delta),
        }
    }
}

pub(crate) fn t_ln_pdf_at(rho: f64, nu: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu)
        - 2.0 * ln_gamma(0.5 * (nu + 1.0))
        - 0.5 * r2.ln()
        - 0.5 * (nu + 2.0) * ((x * x + y * y - 2.0 * rho * x * y) / (nu * r2)).ln_1p()
        + 0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
}

/// First Debye function `D1(x) = (1/x) integral_0^x t / (e^t - 1) dt`.
fn debye1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return 1.0 - x / 4.0;
    }
    let f = |t: f64| if t.abs() < 1e-12 { 1.0 } else { t / t.exp_m1() };
    adaptive_simpson(&f, 0.0, x, 1e-13) / x
}

pub fn frank_tau(theta: f64) -> f64 {
    if theta.abs() < 1e-8 {
        return theta / 9.0;
    }
    1.0 - 4.0 / theta * (1.0 - debye1(theta))
}

/// Tau of BB8 via its generator `phi(t) = -ln((1 - (1 - delta t)^theta) / eta)`:
/// `tau = 1 + 4 integral_0^1 phi / phi'`. With `delta = 1` this is Joe.
pub fn bb8_tau(theta: f64, delta: f64) -> f64 {
    let eta = 1.0 - (1.0 - delta).powf(theta);
    let f = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let q = (1.0 - delta * t).powf(theta);
        let one_minus_q = 1.0 - q;
        if one_minus_q <= 0.0 {
            return 0.0;
        }
        let denom = theta * delta * (1.0 - delta * t).powf(theta - 1.0);
        if denom <= 0.0 {
            return 0.0;
        }
        (one_minus_q / eta).ln() * one_minus_q / denom
    };
    // Split at the midpoint: the integrand has a log singularity in its
    // derivative at 0 and, for delta = 1, at 1.
    let tol = 1e-12;
    1.0 + 4.0 * (adaptive_simpson(&f, 0.0, 0.5, tol) + adaptive_simpson(&f, 0.5, 1.0, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frank_tau_known_value() {
        // Table value: theta = 1.77 gives tau = 0.19.
        assert!((frank_tau(1.77) - 0.19).abs() < 0.005);
        assert!((frank_tau(-1.77) + frank_tau(1.77)).abs() < 1e-10);
    }

    #[test]
    fn joe_tau_matches_series() {
        for &theta in &[1.5, 2.0, 4.0] {
            let mut series = 0.0;
            for k in 1..200_000 {
                let k = k as f64;
                series += 1.0 / (k * (theta * k + 2.0) * (theta * (k - 1.0) + 2.0));
            }
            let exact = 1.0 - 4.0 * series;
            assert!((bb8_tau(theta, 1.0) - exact).abs() < 1e-6, "theta={theta}");
        }
    }

    #[test]
    fn bb8_density_matches_finite_difference() {
        let c = Base::Bb8 {
            theta: 2.74,
            delta: 0.59,
        };
        for &(u, v) in &[(0.2, 0.3), (0.7, 0.4), (0.9, 0.95)] {
            let e = 1e-5;
            let fd = (c.cdf(u + e, v + e) - c.cdf(u + e, v - e) - c.cdf(u - e, v + e)
                + c.cdf(u - e, v - e))
                / (4.0 * e * e);
            assert!(
                (c.ln_pdf(u, v).exp() - fd).abs() < 1e-4 * fd.max(1.0),
                "({u},{v})"
            );
            let hfd = (c.cdf(u, v + e) - c.cdf(u, v - e)) / (2.0 * e);
            assert!((c.h(u, v) - hfd).abs() < 1e-7);
        }
    }
}
