use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_quantile};

/// Empirical CDF with plotting position `rank / (n + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EcdfRepr", into = "EcdfRepr")]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EcdfRepr {
    sorted_sample: Vec<f64>,
}

impl TryFrom<EcdfRepr> for EmpiricalCdf {
    type Error = Error;
    fn try_from(r: EcdfRepr) -> Result<Self> {
        if r.sorted_sample.len() < 2 {
            return Err(Error::invariant("empirical CDF needs at least 2 points"));
        }
        if r.sorted_sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::invariant("empirical CDF sample must be finite"));
        }
        if r.sorted_sample.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invariant("empirical CDF sample is not sorted"));
        }
        Ok(Self {
            sorted: r.sorted_sample,
        })
    }
}

impl From<EmpiricalCdf> for EcdfRepr {
    fn from(c: EmpiricalCdf) -> Self {
        EcdfRepr {
            sorted_sample: c.sorted,
        }
    }
}

impl EmpiricalCdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        let mut sorted: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < 2 {
            return Err(Error::size(format!(
                "empirical CDF needs at least 2 finite points, got {}",
                sorted.len()
            )));
        }
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Number of sample points `<= x`.
    pub fn rank(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v <= x)
    }

    /// Number of sample points `< x`.
    pub fn rank_strict(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v < x)
    }

    /// `#{x_i <= x} / (n + 1)`: nondecreasing and right-continuous.
    pub fn eval(&self, x: f64) -> f64 {
        self.rank(x) as f64 / (self.len() + 1) as f64
    }

    /// Average rank of `x` over its tied block, `(#{x_i < x} + #{x_i <= x} + 1) / 2`,
    /// divided by `n + 1`. Values between sample points sit halfway between
    /// neighbouring ranks. The result lies in `[1/(n+1), n/(n+1)]`.
    pub fn eval_mid(&self, x: f64) -> f64 {
        let lo = self.rank_strict(x) as f64;
        let hi = self.rank(x) as f64;
        let r = if hi > lo {
            0.5 * (lo + hi + 1.0)
        } else {
            lo + 0.5
        };
        r.clamp(1.0, self.len() as f64) / (self.len() + 1) as f64
    }

    /// Left-continuous generalized inverse of [`eval`](Self::eval): the
    /// smallest sample value whose CDF value reaches `u`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("probability {u} outside (0, 1)")));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        let n = self.len();
        let pos = u * (n + 1) as f64;
        // Absorb rounding in `u * (n + 1)` (including a normal CDF/quantile
        // round trip) so grid points map to their own order statistic.
        let k = (pos - 1e-9).ceil();
        let k = (k.max(1.0) as usize).min(n);
        self.sorted[k - 1]
    }

    /// Quantile with linear interpolation between order statistics placed
    /// at `i / (n + 1)`, clamped to the sample range.
    pub fn quantile_interpolated(&self, u: f64) -> f64 {
        let n = self.len();
        let pos = u * (n + 1) as f64;
        if pos <= 1.0 {
            return self.sorted[0];
        }
        if pos >= n as f64 {
            return self.sorted[n - 1];
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        self.sorted[k - 1] + frac * (self.sorted[k] - self.sorted[k - 1])
    }

    /// Smallest and largest attainable plotting positions.
    pub fn clamp_bounds(&self) -> (f64, f64) {
        let n1 = (self.len() + 1) as f64;
        (1.0 / n1, self.len() as f64 / n1)
    }
}

/// `y = Phi^-1(F(x))`, with `F(x)` clamped to `[1/(n+1), n/(n+1)]`.
/// Missing values stay missing.
pub fn pit_normalize(x: &[Option<f64>], cdf: &EmpiricalCdf) -> Vec<Option<f64>> {
    let (lo, hi) = cdf.clamp_bounds();
    x.iter()
        .map(|v| v.map(|v| normal_quantile(cdf.eval(v).clamp(lo, hi))))
        .collect()
}

/// `x = F^-1(Phi(y))`; the result always lies within the sample range.
pub fn pit_inverse(y: &[Option<f64>], cdf: &EmpiricalCdf) -> Vec<Option<f64>> {
    let (lo, hi) = cdf.clamp_bounds();
    y.iter()
        .map(|v| v.map(|v| cdf.quantile_unchecked(normal_cdf(v).clamp(lo, hi))))
        .collect()
}
