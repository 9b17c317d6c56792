//! Small numerical optimizers used by the estimators: Nelder-Mead,
//! Brent minimization and root finding, bounded Levenberg-Marquardt and a
//! finite-difference Hessian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            f_tol: 1e-10,
            x_tol: 1e-9,
        }
    }
}

/// Nelder-Mead simplex minimization with dimension-adaptive coefficients.
///
/// `f` may return `f64::INFINITY` (or NaN) to reject a point; such points are
/// never accepted into the simplex unless the whole simplex is infeasible.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        return Minimum {
            x: vec![],
            fx: eval(&[]),
            iterations: 0,
            converged: true,
        };
    }
    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if values[0].is_finite()
            && spread.abs() <= opts.f_tol * (1.0 + values[0].abs())
            && diameter <= opts.x_tol
        {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(alpha * beta);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * gamma);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + delta * (*x - b);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        converged,
    }
}

/// Brent's method for a one-dimensional minimum on `[a, b]`.
pub fn brent_minimize<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Root of `f` on a bracketing interval (Brent-Dekker). Returns `None` when
/// the endpoints do not bracket a sign change.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return None;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Box-constrained Levenberg-Marquardt. `residuals` fills the residual
/// vector; `jacobian` fills the row-major `m x n` Jacobian. Steps are
/// projected onto `[lower, upper]`.
pub fn levenberg_marquardt<R, J>(
    residuals: R,
    jacobian: J,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    m: usize,
    opts: LmOptions,
) -> LeastSquaresFit
where
    R: Fn(&[f64], &mut [f64]),
    J: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let sse_of = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut x = x0.to_vec();
    project(&mut x);
    let mut r = vec![0.0; m];
    residuals(&x, &mut r);
    let mut sse = sse_of(&r);
    let mut jac = vec![0.0; m * n];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    while iterations < opts.max_iter {
        iterations += 1;
        jacobian(&x, &mut jac);
        let jm = DMatrix::from_row_slice(m, n, &jac);
        let rv = DVector::from_column_slice(&r);
        let jtj = jm.transpose() * &jm;
        let jtr = jm.transpose() * &rv;
        // Parameters on a bound whose descent direction points outward stay
        // put; clipping their steps instead would distort the free ones.
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                !((x[i] <= lower[i] && jtr[i] > 0.0) || (x[i] >= upper[i] && jtr[i] < 0.0))
            })
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let k = free.len();
        let jtj_f = DMatrix::from_fn(k, k, |a, b| jtj[(free[a], free[b])]);
        let jtr_f = DVector::from_fn(k, |a, _| jtr[free[a]]);
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj_f.clone();
            for i in 0..k {
                a[(i, i)] += lambda * jtj_f[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr_f));
            trial.copy_from_slice(&x);
            for (a, &i) in free.iter().enumerate() {
                trial[i] = x[i] + step[a];
            }
            project(&mut trial);
            residuals(&trial, &mut r_trial);
            let sse_trial = sse_of(&r_trial);
            if sse_trial.is_finite() && sse_trial < sse {
                let rel = (sse - sse_trial) / sse.max(f64::MIN_POSITIVE);
                let moved = x
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).abs() / (a.abs() + 1e-12))
                    .fold(0.0, f64::max);
                x.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                sse = sse_trial;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < opts.tol || moved < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No downhill step at any damping: a (possibly bounded) minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LeastSquaresFit {
        x,
        sse,
        iterations,
        converged,
    }
}

/// Central-difference Hessian of `f` at `x` with relative steps.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(x);
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h[i];
        let fp = f(&p);
        p[i] = x[i] - h[i];
        let fm = f(&p);
        p[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut g = |si: f64, sj: f64| {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v =
                (g(1.0, 1.0) - g(1.0, -1.0) - g(-1.0, 1.0) + g(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], NelderMeadOptions::default());
        assert!(
            (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            m
        );
    }

    #[test]
    fn nelder_mead_respects_infeasible_region() {
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                f64::INFINITY
            } else {
                x[0] * x[0]
            }
        };
        let m = nelder_mead(f, &[2.0], &[0.5], NelderMeadOptions::default());
        assert!((m.x[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brent_root_cubic() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 3.0, 1e-14).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn lm_fits_exponential_decay() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let m = ts.len();
        let fit = levenberg_marquardt(
            |p, r| {
                for i in 0..m {
                    r[i] = p[0] * (-p[1] * ts[i]).exp() - ys[i];
                }
            },
            |p, j| {
                for i in 0..m {
                    let e = (-p[1] * ts[i]).exp();
                    j[2 * i] = e;
                    j[2 * i + 1] = -p[0] * ts[i] * e;
                }
            },
            &[1.0, 0.1],
            &[0.0, 0.0],
            &[10.0, 10.0],
            m,
            LmOptions::default(),
        );
        assert!((fit.x[0] - 2.5).abs() < 1e-8 && (fit.x[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn lm_slides_along_an_active_bound() {
        // Unconstrained slope 3; with slope capped at 1 the intercept must
        // absorb the difference, which clipped steps fail to find quickly.
        let ts: Vec<f64> = (0..20).map(|i| 5.0 + i as f64 * 0.5).collect();
        let m = ts.len();
        let fit = levenberg_marquardt(
            |p, r| {
                for i in 0..m {
                    r[i] = p[0] + p[1] * ts[i] - (1.0 + 3.0 * ts[i]);
                }
            },
            |_, j| {
                for i in 0..m {
                    j[2 * i] = 1.0;
                    j[2 * i + 1] = ts[i];
                }
            },
            &[0.0, 0.5],
            &[-100.0, -100.0],
            &[100.0, 1.0],
            m,
            LmOptions::default(),
        );
        let want = 1.0 + 2.0 * ts.iter().sum::<f64>() / m as f64;
        assert!(fit.converged && fit.iterations < 50, "{fit:?}");
        assert_eq!(fit.x[1], 1.0);
        assert!((fit.x[0] - want).abs() < 1e-8, "{fit:?}");
    }

    #[test]
    fn hessian_of_quadratic() {
        let h = numerical_hessian(
            |x| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + x[1] * x[1],
            &[0.4, -1.0],
        );
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 2.0).abs() < 1e-5);
    }
}
