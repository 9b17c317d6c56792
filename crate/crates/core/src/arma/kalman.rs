//! Exact Gaussian likelihood of a stationary ARMA(p, q) via the Kalman
//! filter on the Harvey state-space form, with the innovation variance
//! concentrated out.

use nalgebra::DMatrix;

pub(crate) struct Filtered {
    /// Innovation `v_t` and its variance factor `F_t` (in units of
    /// `sigma^2`) for every observed hour; `None` where the input is missing.
    pub innovations: Vec<Option<(f64, f64)>>,
    pub n_obs: usize,
    /// `sum v^2 / F`.
    pub ssq: f64,
    /// `sum ln F`.
    pub sum_ln_f: f64,
}

impl Filtered {
    pub fn sigma2(&self) -> f64 {
        self.ssq / self.n_obs as f64
    }

    /// Gaussian log-likelihood at the concentrated variance.
    pub fn log_likelihood(&self) -> f64 {
        let n = self.n_obs as f64;
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0 + self.sigma2().ln())
            - 0.5 * self.sum_ln_f
    }
}

/// Stationary state covariance: solves `P = T P T' + R R'`.
fn initial_covariance(phi: &[f64], rvec: &[f64]) -> Option<Vec<f64>> {
    let r = phi.len();
    let t = DMatrix::from_fn(r, r, |i, j| {
        if j == 0 {
            phi[i]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    let kron = t.kronecker(&t);
    let a = DMatrix::identity(r * r, r * r) - kron;
    let q = nalgebra::DVector::from_fn(r * r, |k, _| rvec[k / r] * rvec[k % r]);
    let sol = a.lu().solve(&q)?;
    Some(sol.iter().copied().collect())
}

/// Runs the filter on `z - mean`. NaN marks a missing hour.
pub(crate) fn filter(z: &[f64], mean: f64, ar: &[f64], ma: &[f64]) -> Option<Filtered> {
    let r = ar.len().max(ma.len() + 1);
    let mut phi = vec![0.0; r];
    phi[..ar.len()].copy_from_slice(ar);
    let mut rv = vec![0.0; r];
    rv[0] = 1.0;
    rv[1..=ma.len()].copy_from_slice(ma);
    let rr: Vec<f64> = (0..r * r).map(|k| rv[k / r] * rv[k % r]).collect();

    let mut p = initial_covariance(&phi, &rv)?;
    if !p.iter().all(|v| v.is_finite()) || !(p[0] > 0.0) {
        return None;
    }
    let mut a = vec![0.0; r];
    let mut af = vec![0.0; r];
    let mut pf = vec![0.0; r * r];
    let mut m = vec![0.0; r * r];
    let mut gain = vec![0.0; r];
    let mut steady = false;
    let mut calm = 0usize;

    let mut out = Filtered {
        innovations: Vec::with_capacity(z.len()),
        n_obs: 0,
        ssq: 0.0,
        sum_ln_f: 0.0,
    };
    let tx = |x: &[f64], y: &mut [f64]| {
        for i in 0..r {
            y[i] = phi[i] * x[0] + if i + 1 < r { x[i + 1] } else { 0.0 };
        }
    };

    for &y in z {
        let observed = y.is_finite();
        if !observed {
            out.innovations.push(None);
            steady = false;
            calm = 0;
            af.copy_from_slice(&a);
            pf.copy_from_slice(&p);
        } else {
            let f = p[0];
            if !(f > 0.0) {
                return None;
            }
            let v = y - mean - a[0];
            out.innovations.push(Some((v, f)));
            out.n_obs += 1;
            out.ssq += v * v / f;
            out.sum_ln_f += f.ln();
            if !steady {
                for i in 0..r {
                    gain[i] = p[i * r] / f;
                }
            }
            for i in 0..r {
                af[i] = a[i] + gain[i] * v;
            }
            if !steady {
                for i in 0..r {
                    for j in 0..r {
                        pf[i * r + j] = p[i * r + j] - gain[i] * p[j];
                    }
                }
            }
        }
        tx(&af, &mut a);
        if steady {
            continue;
        }
        // P <- T Pf T' + R R'
        for j in 0..r {
            for i in 0..r {
                m[i * r + j] = phi[i] * pf[j] + if i + 1 < r { pf[(i + 1) * r + j] } else { 0.0 };
            }
        }
        let f_old = p[0];
        for i in 0..r {
            for j in 0..r {
                p[i * r + j] = phi[j] * m[i * r]
                    + if j + 1 < r { m[i * r + j + 1] } else { 0.0 }
                    + rr[i * r + j];
            }
        }
        if observed && (p[0] - f_old).abs() <= 1e-14 * p[0] {
            calm += 1;
            if calm >= 5 {
                steady = true;
                for i in 0..r {
                    gain[i] = p[i * r] / p[0];
                }
            }
        } else {
            calm = 0;
        }
    }
    Some(out)
}
