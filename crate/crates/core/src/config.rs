//! Run configuration shared by fitting and simulation. Unknown keys are
//! rejected so typos surface instead of silently falling back to defaults.

use serde::{Deserialize, Serialize};

use crate::calendar::SeasonCalendar;
use crate::copula::Family;
use crate::error::{Error, Result};
use crate::ingest::DEFAULT_MAX_GAP;
use crate::seasonal::DEFAULT_BANDWIDTH;
use crate::steepness::{DEFAULT_BINS, DEFAULT_B_UPPER};

pub const MIN_YEARS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmaOrder {
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Kernel bandwidth in hours.
    pub bandwidth: usize,
    pub arma_hm0: ArmaOrder,
    pub arma_tm02: ArmaOrder,
    pub steepness_bins: usize,
    /// Upper bound on the steepness parameter `b`, meters.
    pub b_upper: f64,
    /// Longest interior gap filled by interpolation, hours.
    pub max_gap: usize,
    pub seasons: SeasonCalendar,
    pub copula_candidates: Vec<Family>,
    /// Significance level of the coefficient independence tests.
    pub coefficient_alpha: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bandwidth: DEFAULT_BANDWIDTH,
            arma_hm0: ArmaOrder { p: 3, q: 0 },
            arma_tm02: ArmaOrder { p: 3, q: 2 },
            steepness_bins: DEFAULT_BINS,
            b_upper: DEFAULT_B_UPPER,
            max_gap: DEFAULT_MAX_GAP,
            seasons: SeasonCalendar::default(),
            copula_candidates: Family::ALL.to_vec(),
            coefficient_alpha: 0.05,
            burn_in: crate::arma::DEFAULT_BURN_IN,
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if !(24..=4 * 720).contains(&self.bandwidth) {
            return bad("bandwidth", "must lie in [24, 2880] hours");
        }
        for (key, o) in [("arma_hm0", self.arma_hm0), ("arma_tm02", self.arma_tm02)] {
            if o.p > 8 || o.q > 8 {
                return bad(key, "orders above 8 are not supported");
            }
        }
        if !(4..=10_000).contains(&self.steepness_bins) {
            return bad("steepness_bins", "must lie in [4, 10000]");
        }
        if !(self.b_upper > 0.0 && self.b_upper.is_finite()) {
            return bad("b_upper", "must be a positive number of meters");
        }
        if !(1..=168).contains(&self.max_gap) {
            return bad("max_gap", "must lie in [1, 168] hours");
        }
        self.seasons.validate()?;
        if self.copula_candidates.is_empty() {
            return bad("copula_candidates", "needs at least one family");
        }
        if !(self.coefficient_alpha > 0.0 && self.coefficient_alpha < 1.0) {
            return bad("coefficient_alpha", "must lie in (0, 1)");
        }
        if self.burn_in > 100_000 {
            return bad("burn_in", "must be at most 100000 hours");
        }
        Ok(())
    }
}
