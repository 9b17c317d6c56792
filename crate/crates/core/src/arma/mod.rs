//! ARMA(p, q) models for the deseasonalized series: identification aids,
//! exact maximum likelihood, residuals and simulation.
//!
//! Convention: `Z_t = c + sum phi_i Z_{t-i} + e_t + sum theta_j e_{t-j}`.

mod kalman;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::optim::{levenberg_marquardt, numerical_hessian, LmOptions};

pub const DEFAULT_BURN_IN: usize = 1000;
/// Minimal allowed modulus of AR and MA polynomial roots is `1 + ROOT_TOL`.
pub const ROOT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_obs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Constant `c` of the recursion; the process mean is `c / (1 - sum phi)`.
    pub intercept: f64,
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<StdErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitInfo>,
}

/// Moduli of the roots of `1 - sum c_i x^i`, from the companion matrix.
fn root_moduli(c: &[f64]) -> Vec<f64> {
    let k = c.len();
    if k == 0 {
        return vec![];
    }
    let comp = DMatrix::from_fn(k, k, |i, j| {
        if i == 0 {
            c[j]
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues()
        .iter()
        .map(|l| 1.0 / l.norm())
        .collect()
}

fn min_root(c: &[f64]) -> f64 {
    root_moduli(c).into_iter().fold(f64::INFINITY, f64::min)
}

impl ArmaModel {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, intercept: f64, sigma2: f64) -> Result<Self> {
        let m = Self {
            p: ar.len(),
            q: ma.len(),
            ar,
            ma,
            intercept,
            sigma2,
            std_errors: None,
            fit: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn mean(&self) -> f64 {
        self.intercept / (1.0 - self.ar.iter().sum::<f64>())
    }

    /// Smallest modulus of the AR polynomial roots (infinite for p = 0).
    pub fn ar_min_root(&self) -> f64 {
        min_root(&self.ar)
    }

    pub fn ma_min_root(&self) -> f64 {
        let neg: Vec<f64> = self.ma.iter().map(|t| -t).collect();
        min_root(&neg)
    }

    pub fn is_stationary(&self) -> bool {
        self.ar_min_root() > 1.0 + ROOT_TOL
    }

    pub fn is_invertible(&self) -> bool {
        self.ma_min_root() > 1.0 + ROOT_TOL
    }

    pub fn validate(&self) -> Result<()> {
        if self.ar.len() != self.p || self.ma.len() != self.q {
            return Err(Error::invariant(format!(
                "ARMA({}, {}) has {} AR and {} MA coefficients",
                self.p,
                self.q,
                self.ar.len(),
                self.ma.len()
            )));
        }
        let finite =
            self.ar.iter().chain(&self.ma).all(|v| v.is_finite()) && self.intercept.is_finite();
        if !finite || !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invariant(
                "ARMA coefficients must be finite with sigma2 > 0",
            ));
        }
        if !self.is_stationary() {
            return Err(Error::invariant(format!(
                "AR polynomial has a root of modulus {:.9} (need > 1 + {ROOT_TOL})",
                self.ar_min_root()
            )));
        }
        if !self.is_invertible() {
            return Err(Error::invariant(format!(
                "MA polynomial has a root of modulus {:.9} (need > 1 + {ROOT_TOL})",
                self.ma_min_root()
            )));
        }
        Ok(())
    }

    /// Runs the recursion from zero initial values over `eps` and drops the
    /// first `burn_in` values.
    pub fn simulate(&self, eps: &[f64], burn_in: usize) -> Vec<f64> {
        let mut z = self.simulate_full(eps);
        z.drain(..burn_in.min(z.len()));
        z
    }

    /// Like [`simulate`](Self::simulate) but keeps the burn-in.
    pub fn simulate_full(&self, eps: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(eps.len());
        for t in 0..eps.len() {
            let s = self.predictor(&z, eps, t);
            z.push(s + eps[t]);
        }
        z
    }

    /// `c + sum phi_i z_{t-i} + sum theta_j e_{t-j}` with zero pre-sample.
    fn predictor(&self, z: &[f64], eps: &[f64], t: usize) -> f64 {
        let mut s = self.intercept;
        for (i, phi) in self.ar.iter().enumerate() {
            if t > i {
                s += phi * z[t - 1 - i];
            }
        }
        for (j, th) in self.ma.iter().enumerate() {
            if t > j {
                s += th * eps[t - 1 - j];
            }
        }
        s
    }

    /// Inverts the recursion assuming zero pre-sample values, so it undoes
    /// [`simulate_full`](Self::simulate_full) up to rounding.
    pub fn conditional_residuals(&self, z: &[f64]) -> Vec<f64> {
        let mut eps = Vec::with_capacity(z.len());
        for t in 0..z.len() {
            let s = self.predictor(z, &eps, t);
            eps.push(z[t] - s);
        }
        eps
    }

    /// One-step-ahead innovations from the exact Kalman filter, rescaled by
    /// `1 / sqrt(F_t)` so every value has the innovation variance. Missing
    /// inputs give missing residuals.
    pub fn residuals(&self, z: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
        let zz: Vec<f64> = z.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let f = kalman::filter(&zz, self.mean(), &self.ar, &self.ma)
            .ok_or_else(|| Error::invariant("Kalman filter failed on a validated model"))?;
        Ok(f.innovations
            .into_iter()
            .map(|o| o.map(|(v, f)| v / f.sqrt()))
            .collect())
    }

    /// Exact Gaussian log-likelihood at the model's own `sigma2`.
    pub fn log_likelihood(&self, z: &[Option<f64>]) -> Result<f64> {
        let zz: Vec<f64> = z.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let f = kalman::filter(&zz, self.mean(), &self.ar, &self.ma)
            .ok_or_else(|| Error::invariant("Kalman filter failed on a validated model"))?;
        let n = f.n_obs as f64;
        Ok(-0.5 * n * (2.0 * std::f64::consts::PI * self.sigma2).ln()
            - 0.5 * f.sum_ln_f
            - 0.5 * f.ssq / self.sigma2)
    }

    /// The first `n` MA(infinity) weights `psi_0 = 1, psi_1, ...`.
    fn psi_weights(&self, n: usize) -> Vec<f64> {
        let mut psi = vec![0.0; n];
        psi[0] = 1.0;
        for j in 1..n {
            let mut v = if j <= self.q { self.ma[j - 1] } else { 0.0 };
            for (i, phi) in self.ar.iter().enumerate() {
                if j > i {
                    v += phi * psi[j - 1 - i];
                }
            }
            psi[j] = v;
        }
        psi
    }

    /// Stationary variance per unit innovation variance, `sum psi_j^2`.
    pub fn variance_gain(&self) -> f64 {
        self.psi_weights(20_000).iter().map(|v| v * v).sum()
    }

    /// Theoretical autocorrelations at lags `0..=max_lag` from the
    /// MA(infinity) weights.
    pub fn theoretical_acf(&self, max_lag: usize) -> Vec<f64> {
        let psi = self.psi_weights(20_000.max(max_lag * 10));
        let g0: f64 = psi.iter().map(|v| v * v).sum();
        (0..=max_lag)
            .map(|k| psi.iter().zip(&psi[k..]).map(|(a, b)| a * b).sum::<f64>() / g0)
            .collect()
    }
}

fn finite_values(x: &[f64]) -> Vec<f64> {
    x.iter().copied().filter(|v| v.is_finite()).collect()
}

/// Sample autocorrelations at lags `0..=max_lag`. NaN entries are skipped
/// pairwise; the denominator is the full-sample variance.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() < max_lag + 2 {
        return Err(Error::size(format!(
            "ACF to lag {max_lag} needs more than {} points, got {}",
            max_lag + 1,
            x.len()
        )));
    }
    let fin = finite_values(x);
    if fin.is_empty() {
        return Err(Error::size("ACF of an all-missing series"));
    }
    let n = fin.len() as f64;
    let m = fin.iter().sum::<f64>() / n;
    let g0 = fin.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    if !(g0 > 0.0) {
        return Err(Error::domain("ACF of a constant series is undefined"));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let s: f64 = x
                .iter()
                .zip(&x[k..])
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (a - m) * (b - m))
                .sum();
            s / n / g0
        })
        .collect())
}

/// Durbin-Levinson: partial autocorrelations at lags `1..=max_lag` from
/// autocorrelations `rho[0..=max_lag]`. Also returns the AR(max_lag)
/// Yule-Walker coefficients.
fn durbin_levinson(rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max_lag = rho.len() - 1;
    let mut pacf = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for k in 1..=max_lag {
        let num = rho[k]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * rho[k - 1 - j])
                .sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let mut next: Vec<f64> = (0..k - 1).map(|j| phi[j] - a * phi[k - 2 - j]).collect();
        next.push(a);
        phi = next;
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    (pacf, phi)
}

/// Sample partial autocorrelations at lags `1..=max_lag`.
pub fn pacf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(x, max_lag)?;
    Ok(durbin_levinson(&rho).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Ljung-Box portmanteau test over lags `1..=lags`, with `fitted` model
/// parameters subtracted from the degrees of freedom.
pub fn ljung_box(resid: &[f64], lags: usize, fitted: usize) -> Result<LjungBox> {
    if lags <= fitted {
        return Err(Error::domain(
            "Ljung-Box needs more lags than fitted parameters",
        ));
    }
    let rho = acf(resid, lags)?;
    let n = finite_values(resid).len() as f64;
    let q: f64 = (1..=lags)
        .map(|k| rho[k] * rho[k] / (n - k as f64))
        .sum::<f64>()
        * n
        * (n + 2.0);
    let dof = lags - fitted;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(q);
    Ok(LjungBox {
        statistic: q,
        dof,
        p_value,
    })
}

/// Maps unconstrained reals to the coefficients of a stationary AR
/// polynomial through partial autocorrelations `tanh(u_k)`.
fn pacf_to_ar(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::new();
    for (k, x) in u.iter().enumerate() {
        let r = x.tanh();
        let mut next: Vec<f64> = (0..k).map(|j| phi[j] - r * phi[k - 1 - j]).collect();
        next.push(r);
        phi = next;
    }
    phi
}

/// Inverse of [`pacf_to_ar`]; `None` if `phi` is not stationary.
fn ar_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let mut cur = phi.to_vec();
    let mut u = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let r = cur[k];
        if !(r.abs() < 1.0) {
            return None;
        }
        u[k] = r.atanh();
        let d = 1.0 - r * r;
        cur = (0..k).map(|j| (cur[j] + r * cur[k - 1 - j]) / d).collect();
    }
    Some(u)
}

/// Pulls coefficients strictly inside the stationary region by shrinking
/// toward zero.
fn shrink_stationary(c: &[f64]) -> Vec<f64> {
    let mut c = c.to_vec();
    for _ in 0..200 {
        if min_root(&c) > 1.0 + 1e-3 {
            break;
        }
        for v in &mut c {
            *v *= 0.95;
        }
    }
    c
}

/// Unconstrained parameter vector: `[pacf(ar), pacf(-ma), mean]`.
struct Layout {
    p: usize,
    q: usize,
}

impl Layout {
    fn decode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let ar = pacf_to_ar(&x[..self.p]);
        let ma: Vec<f64> = pacf_to_ar(&x[self.p..self.p + self.q])
            .iter()
            .map(|v| -v)
            .collect();
        (ar, ma, x[self.p + self.q])
    }

    fn encode(&self, ar: &[f64], ma: &[f64], mean: f64) -> Vec<f64> {
        let ar = shrink_stationary(ar);
        let neg: Vec<f64> = ma.iter().map(|v| -v).collect();
        let neg = shrink_stationary(&neg);
        let mut x = ar_to_pacf(&ar).unwrap_or_else(|| vec![0.0; self.p]);
        x.extend(ar_to_pacf(&neg).unwrap_or_else(|| vec![0.0; self.q]));
        x.push(mean);
        x
    }
}

/// Ordinary least squares `y ~ X` (row-major), via QR.
fn ols(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len();
    if k == 0 {
        return Some(vec![]);
    }
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let svd = x.svd(true, true);
    let sol = svd.solve(&yv, 1e-12).ok()?;
    Some(sol.iter().copied().collect())
}

/// Hannan-Rissanen start: a long Yule-Walker AR supplies innovation
/// estimates, then `z` is regressed on its own lags and lagged innovations.
fn hannan_rissanen(z: &[f64], mean: f64, p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let zc: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let long = (p + q)
        .max(((zc.len() as f64).log10() * 10.0) as usize)
        .min(60);
    let Ok(rho) = acf(&zc, long) else {
        return (vec![0.0; p], vec![0.0; q]);
    };
    let (_, yw_long) = durbin_levinson(&rho);
    let (_, yw_p) = durbin_levinson(&rho[..=p]);
    if q == 0 {
        return (yw_p, vec![]);
    }
    let mut e = vec![f64::NAN; zc.len()];
    for t in long..zc.len() {
        let pred: f64 = yw_long
            .iter()
            .enumerate()
            .map(|(i, c)| c * zc[t - 1 - i])
            .sum();
        e[t] = zc[t] - pred;
    }
    let start = long + q;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for t in start..zc.len() {
        let mut row: Vec<f64> = (1..=p).map(|i| zc[t - i]).collect();
        row.extend((1..=q).map(|j| e[t - j]));
        if zc[t].is_finite() && row.iter().all(|v| v.is_finite()) {
            rows.push(row);
            y.push(zc[t]);
        }
    }
    match ols(&rows, &y) {
        Some(b) if rows.len() > 10 * (p + q) => (b[..p].to_vec(), b[p..].to_vec()),
        _ => (yw_p, vec![0.0; q]),
    }
}

/// Gaussian MLE of an ARMA(p, q) with intercept via the exact Kalman
/// likelihood. NaN marks missing hours.
pub fn fit_arma(z: &[Option<f64>], p: usize, q: usize) -> Result<ArmaModel> {
    let zz: Vec<f64> = z.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let fin = finite_values(&zz);
    let need = 50 * (p + q + 1);
    if fin.len() < need {
        return Err(Error::size(format!(
            "ARMA({p}, {q}) fit needs at least {need} observations, got {}",
            fin.len()
        )));
    }
    let n_obs = fin.len();
    let mean0 = fin.iter().sum::<f64>() / n_obs as f64;
    let layout = Layout { p, q };
    let k = p + q + 1;

    // The concentrated likelihood is a sum of squares of innovations scaled
    // by sqrt(g / F_t), g the geometric mean of F_t.
    let scaled = |x: &[f64], out: &mut [f64]| {
        let (ar, ma, mu) = layout.decode(x);
        match kalman::filter(&zz, mu, &ar, &ma) {
            Some(f) => {
                let g = (f.sum_ln_f / f.n_obs as f64).exp();
                for (o, (v, fv)) in out.iter_mut().zip(f.innovations.iter().flatten()) {
                    *o = v * (g / fv).sqrt();
                }
            }
            None => out.iter_mut().for_each(|o| *o = f64::INFINITY),
        }
    };
    let jac = |x: &[f64], j: &mut [f64]| {
        let mut base = vec![0.0; n_obs];
        scaled(x, &mut base);
        let mut xp = x.to_vec();
        let mut col = vec![0.0; n_obs];
        for c in 0..k {
            let h = 1e-7 * x[c].abs().max(1.0);
            xp[c] = x[c] + h;
            scaled(&xp, &mut col);
            xp[c] = x[c];
            for i in 0..n_obs {
                j[i * k + c] = (col[i] - base[i]) / h;
            }
        }
    };

    let (ar_hr, ma_hr) = hannan_rissanen(&zz, mean0, p, q);
    let mut starts = vec![layout.encode(&ar_hr, &ma_hr, mean0)];
    if q > 0 {
        let rho = acf(&zz, p.max(1))?;
        let (_, yw) = durbin_levinson(&rho[..=p]);
        starts.push(layout.encode(&yw, &vec![0.0; q], mean0));
    }
    let lower = vec![-40.0; k];
    let upper = vec![40.0; k];
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for x0 in starts {
        let fit = levenberg_marquardt(
            &scaled,
            &jac,
            &x0,
            &lower,
            &upper,
            n_obs,
            LmOptions {
                max_iter: 200,
                tol: 1e-13,
            },
        );
        if fit.sse.is_finite() && best.as_ref().is_none_or(|b| fit.sse < b.0) {
            best = Some((fit.sse, fit.x, fit.converged));
        }
    }
    let (_, x, converged) =
        best.ok_or_else(|| Error::fit(format!("ARMA({p}, {q}) fit diverged")))?;
    let (ar, ma, mu) = layout.decode(&x);
    let f = kalman::filter(&zz, mu, &ar, &ma)
        .ok_or_else(|| Error::fit("Kalman filter failed at the optimum"))?;
    let ll = f.log_likelihood();
    let intercept = mu * (1.0 - ar.iter().sum::<f64>());
    let mut model = ArmaModel {
        p,
        q,
        ar,
        ma,
        intercept,
        sigma2: f.sigma2(),
        std_errors: None,
        fit: Some(FitInfo {
            log_likelihood: ll,
            aic: 2.0 * (k + 1) as f64 - 2.0 * ll,
            n_obs,
            converged,
        }),
    };
    model
        .validate()
        .map_err(|e| Error::fit(format!("ARMA({p}, {q}) optimum rejected: {e}")))?;
    model.std_errors = standard_errors(&zz, &model);
    Ok(model)
}

/// Standard errors from the inverse Hessian of the concentrated negative
/// log-likelihood in `(ar, ma, intercept)`.
fn standard_errors(z: &[f64], m: &ArmaModel) -> Option<StdErrors> {
    let (p, q) = (m.p, m.q);
    let nll = |x: &[f64]| {
        let ar = &x[..p];
        let ma = &x[p..p + q];
        let mu = x[p + q] / (1.0 - ar.iter().sum::<f64>());
        match kalman::filter(z, mu, ar, ma) {
            Some(f) => -f.log_likelihood(),
            None => f64::INFINITY,
        }
    };
    let mut x0 = m.ar.clone();
    x0.extend(&m.ma);
    x0.push(m.intercept);
    let h = numerical_hessian(nll, &x0);
    let inv = h.try_inverse()?;
    let se: Vec<f64> = (0..x0.len()).map(|i| inv[(i, i)].max(0.0).sqrt()).collect();
    if !se.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(StdErrors {
        ar: se[..p].to_vec(),
        ma: se[p..p + q].to_vec(),
        intercept: se[p + q],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCandidate {
    pub p: usize,
    pub q: usize,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSuggestion {
    /// Successful fits, best AIC first.
    pub ranked: Vec<OrderCandidate>,
    /// Last lag whose ACF leaves the `+-2/sqrt(n)` band before five lags in a
    /// row stay inside it.
    pub acf_cutoff: Option<usize>,
    pub pacf_cutoff: Option<usize>,
}

fn cutoff(values: &[f64], band: f64) -> Option<usize> {
    // values[i] belongs to lag i + 1.
    for (i, _) in values.iter().enumerate() {
        let run = &values[i..(i + 5).min(values.len())];
        if run.len() == 5 && run.iter().all(|v| v.abs() <= band) {
            return Some(i);
        }
    }
    None
}

/// Fits every order up to `(p_max, q_max)` and ranks them by AIC.
pub fn suggest_orders(z: &[Option<f64>], p_max: usize, q_max: usize) -> Result<OrderSuggestion> {
    let zz: Vec<f64> = z.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let n = finite_values(&zz).len();
    let lags = 40.min(n / 4).max(6);
    let band = 2.0 / (n as f64).sqrt();
    let a = acf(&zz, lags)?;
    let pa = pacf(&zz, lags)?;
    let mut ranked = Vec::new();
    for p in 0..=p_max {
        for q in 0..=q_max {
            match fit_arma(z, p, q) {
                Ok(m) => ranked.push(OrderCandidate {
                    p,
                    q,
                    aic: m.fit.map(|f| f.aic).unwrap_or(f64::INFINITY),
                }),
                Err(e) => log::debug!("ARMA({p}, {q}) skipped: {e}"),
            }
        }
    }
    ranked.sort_by(|x, y| x.aic.total_cmp(&y.aic));
    Ok(OrderSuggestion {
        ranked,
        acf_cutoff: cutoff(&a[1..], band),
        pacf_cutoff: cutoff(&pa, band),
    })
}
