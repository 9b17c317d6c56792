//! Bivariate copulas: eight families, four rotations, densities,
//! conditional distributions, sampling and maximum-likelihood selection.

mod families;
mod fit;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use families::{bb8_tau, frank_tau, U_MIN};
pub use fit::{
    candidate_rotations, fit_copula, select_copula, CopulaFit, Selection, INDEPENDENCE_ALPHA,
    MIN_PAIRS,
};

use crate::error::{Error, Result};
use crate::special::{normal_cdf, student_t_cdf};
use families::Base;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Independence,
    Gaussian,
    StudentT,
    Clayton,
    Gumbel,
    Frank,
    Joe,
    Bb8,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Independence,
        Family::Gaussian,
        Family::StudentT,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
        Family::Joe,
        Family::Bb8,
    ];

    pub fn n_params(self) -> usize {
        match self {
            Family::Independence => 0,
            Family::StudentT | Family::Bb8 => 2,
            _ => 1,
        }
    }

    /// Families whose rotations are distinct models. The rest are either
    /// radially symmetric or already cover negative dependence.
    pub fn rotatable(self) -> bool {
        matches!(
            self,
            Family::Clayton | Family::Gumbel | Family::Joe | Family::Bb8
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::StudentT => "student_t",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
            Family::Joe => "joe",
            Family::Bb8 => "bb8",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Rotation angle in degrees; 180 is the survival copula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    /// Rotations by 90 or 270 degrees reverse the sign of dependence.
    pub fn flips_sign(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

impl TryFrom<u16> for Rotation {
    type Error = String;
    fn try_from(d: u16) -> std::result::Result<Self, String> {
        match d {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(format!("rotation must be 0, 90, 180 or 270, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: Family,
    pub rotation: Rotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par2: Option<f64>,
}

/// Admissible parameter box per family (`par1`, then `par2`).
pub(crate) fn bounds(family: Family) -> &'static [(f64, f64)] {
    match family {
        Family::Independence => &[],
        Family::Gaussian => &[(-0.999, 0.999)],
        Family::StudentT => &[(-0.999, 0.999), (2.0001, 100.0)],
        Family::Clayton => &[(1e-6, 40.0)],
        Family::Gumbel => &[(1.0, 25.0)],
        Family::Frank => &[(-40.0, 40.0)],
        Family::Joe => &[(1.0, 30.0)],
        Family::Bb8 => &[(1.0, 10.0), (1e-4, 1.0)],
    }
}

impl CopulaSpec {
    pub fn independence() -> Self {
        Self {
            family: Family::Independence,
            rotation: Rotation::R0,
            par1: None,
            par2: None,
        }
    }

    pub fn new(family: Family, rotation: Rotation, params: &[f64]) -> Result<Self> {
        if params.len() != family.n_params() {
            return Err(Error::domain(format!(
                "{family} takes {} parameters, got {}",
                family.n_params(),
                params.len()
            )));
        }
        let spec = Self {
            family,
            rotation,
            par1: params.first().copied(),
            par2: params.get(1).copied(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(rho: f64) -> Result<Self> {
        Self::new(Family::Gaussian, Rotation::R0, &[rho])
    }

    pub fn student_t(rho: f64, nu: f64) -> Result<Self> {
        Self::new(Family::StudentT, Rotation::R0, &[rho, nu])
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(Family::Frank, Rotation::R0, &[theta])
    }

    pub fn bb8(theta: f64, delta: f64, rotation: Rotation) -> Result<Self> {
        Self::new(Family::Bb8, rotation, &[theta, delta])
    }

    pub fn params(&self) -> Vec<f64> {
        self.par1.into_iter().chain(self.par2).collect()
    }

    pub fn n_params(&self) -> usize {
        self.family.n_params()
    }

    /// Checks parameters against the family's admissible domain.
    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        if p.len() != self.family.n_params() {
            return Err(Error::invariant(format!(
                "{} copula needs {} parameters, found {}",
                self.family,
                self.family.n_params(),
                p.len()
            )));
        }
        if !self.family.rotatable() && self.rotation != Rotation::R0 {
            return Err(Error::invariant(format!(
                "{} copula does not take a rotation",
                self.family
            )));
        }
        for (i, (&v, &(lo, hi))) in p.iter().zip(bounds(self.family)).enumerate() {
            if !(v.is_finite() && v >= lo && v <= hi) {
                return Err(Error::invariant(format!(
                    "{} parameter {} = {v} outside [{lo}, {hi}]",
                    self.family,
                    i + 1
                )));
            }
        }
        if self.family == Family::Frank && p[0] == 0.0 {
            return Err(Error::invariant("frank parameter must be nonzero"));
        }
        Ok(())
    }

    fn base(&self) -> Base {
        let p1 = self.par1.unwrap_or(0.0);
        let p2 = self.par2.unwrap_or(0.0);
        match self.family {
            Family::Independence => Base::Independence,
            Family::Gaussian => Base::Gaussian { rho: p1 },
            Family::StudentT => Base::StudentT { rho: p1, nu: p2 },
            Family::Clayton => Base::Clayton { theta: p1 },
            Family::Gumbel => Base::Gumbel { theta: p1 },
            Family::Frank => Base::Frank { theta: p1 },
            Family::Joe => Base::Joe { theta: p1 },
            Family::Bb8 => Base::Bb8 {
                theta: p1,
                delta: p2,
            },
        }
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        let b = self.base();
        let c = match self.rotation {
            Rotation::R0 => b.cdf(u, v),
            Rotation::R90 => v - b.cdf(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + b.cdf(1.0 - u, 1.0 - v),
            Rotation::R270 => u - b.cdf(u, 1.0 - v),
        };
        c.clamp(0.0, u.min(v))
    }

    pub fn ln_pdf(&self, u: f64, v: f64) -> f64 {
        let b = self.base();
        match self.rotation {
            Rotation::R0 => b.ln_pdf(u, v),
            Rotation::R90 => b.ln_pdf(1.0 - u, v),
            Rotation::R180 => b.ln_pdf(1.0 - u, 1.0 - v),
            Rotation::R270 => b.ln_pdf(u, 1.0 - v),
        }
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.ln_pdf(u, v).exp()
    }

    /// Conditional CDF of the first argument given the second,
    /// `dC(u, v) / dv`.
    pub fn h(&self, u: f64, v: f64) -> f64 {
        let b = self.base();
        match self.rotation {
            Rotation::R0 => b.h(u, v),
            Rotation::R90 => 1.0 - b.h(1.0 - u, v),
            Rotation::R180 => 1.0 - b.h(1.0 - u, 1.0 - v),
            Rotation::R270 => b.h(u, 1.0 - v),
        }
    }

    /// Inverse of [`h`](Self::h) in `u`.
    pub fn h_inv(&self, p: f64, v: f64) -> f64 {
        let b = self.base();
        match self.rotation {
            Rotation::R0 => b.h_inv(p, v),
            Rotation::R90 => 1.0 - b.h_inv(1.0 - p, v),
            Rotation::R180 => 1.0 - b.h_inv(1.0 - p, 1.0 - v),
            Rotation::R270 => b.h_inv(p, 1.0 - v),
        }
    }

    /// Conditional CDF of the second argument given the first,
    /// `dC(u, v) / du`.
    pub fn h1(&self, v: f64, u: f64) -> f64 {
        let b = self.base();
        match self.rotation {
            Rotation::R0 => b.h(v, u),
            Rotation::R90 => b.h(v, 1.0 - u),
            Rotation::R180 => 1.0 - b.h(1.0 - v, 1.0 - u),
            Rotation::R270 => 1.0 - b.h(1.0 - v, u),
        }
    }

    /// Inverse of [`h1`](Self::h1) in `v`: draws the second argument given
    /// the first.
    pub fn h1_inv(&self, p: f64, u: f64) -> f64 {
        let b = self.base();
        match self.rotation {
            Rotation::R0 => b.h_inv(p, u),
            Rotation::R90 => b.h_inv(p, 1.0 - u),
            Rotation::R180 => 1.0 - b.h_inv(1.0 - p, 1.0 - u),
            Rotation::R270 => 1.0 - b.h_inv(1.0 - p, u),
        }
    }

    /// Kendall's tau of the model.
    pub fn tau(&self) -> f64 {
        let t = self.base().tau();
        if self.rotation.flips_sign() {
            -t
        } else {
            t
        }
    }

    /// One draw `(u, v)`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let clamp = |x: f64| x.clamp(U_MIN, 1.0 - U_MIN);
        match self.base() {
            Base::Independence => (clamp(rng.random()), clamp(rng.random())),
            Base::Gaussian { rho } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let x = z1;
                let y = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
                (clamp(normal_cdf(x)), clamp(normal_cdf(y)))
            }
            Base::StudentT { rho, nu } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let w: f64 = ChiSquared::new(nu).expect("nu > 2").sample(rng);
                let s = (nu / w).sqrt();
                let x = z1 * s;
                let y = (rho * z1 + (1.0 - rho * rho).sqrt() * z2) * s;
                (clamp(student_t_cdf(x, nu)), clamp(student_t_cdf(y, nu)))
            }
            _ => {
                let v = clamp(rng.random());
                let w = clamp(rng.random());
                (self.h_inv(w, v), v)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n).map(|_| self.sample_pair(rng)).collect()
    }

    /// Summed log-density. Evaluated in fixed-size chunks so the result
    /// does not depend on the thread count.
    pub fn log_likelihood(&self, u: &[f64], v: &[f64]) -> f64 {
        use rayon::prelude::*;
        const CHUNK: usize = 2048;
        let parts: Vec<f64> = u
            .par_chunks(CHUNK)
            .zip(v.par_chunks(CHUNK))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| self.ln_pdf(x, y))
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum()
    }
}

impl std::fmt::Display for CopulaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.family)?;
        if self.rotation != Rotation::R0 {
            write!(f, "@{}", self.rotation.degrees())?;
        }
        let p = self.params();
        if !p.is_empty() {
            let s: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
            write!(f, "({})", s.join(", "))?;
        }
        Ok(())
    }
}
