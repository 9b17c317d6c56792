//! The fixed model calendar: every model year has 8766 hours, February
//! carrying 28 days plus 6 hours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_YEAR: usize = 8766;

/// Hour of year at which the 6 extra February hours begin (end of Feb 28).
pub const FEB_EXTRA_START: usize = 59 * 24;
pub const FEB_EXTRA_HOURS: usize = 6;

/// Position in the model calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelClock {
    pub year_index: usize,
    pub hour_of_year: usize,
}

impl ModelClock {
    pub fn new(year_index: usize, hour_of_year: usize) -> Result<Self> {
        if hour_of_year >= HOURS_PER_YEAR {
            return Err(Error::domain(format!(
                "hour_of_year {hour_of_year} outside [0, {HOURS_PER_YEAR})"
            )));
        }
        Ok(Self {
            year_index,
            hour_of_year,
        })
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            year_index: index / HOURS_PER_YEAR,
            hour_of_year: index % HOURS_PER_YEAR,
        }
    }

    pub fn index(self) -> usize {
        self.year_index * HOURS_PER_YEAR + self.hour_of_year
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [
        Season::Spring,
        Season::Summer,
        Season::Autumn,
        Season::Winter,
    ];

    pub fn index(self) -> usize {
        match self {
            Season::Spring => 0,
            Season::Summer => 1,
            Season::Autumn => 2,
            Season::Winter => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        }
    }
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hour-of-year at which each model month starts, plus the year length.
pub const MONTH_START: [usize; 13] = {
    let days = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut starts = [0usize; 13];
    let mut i = 0;
    while i < 12 {
        let extra = if i == 1 { FEB_EXTRA_HOURS } else { 0 };
        starts[i + 1] = starts[i] + days[i] * 24 + extra;
        i += 1;
    }
    starts
};

/// Month (0 = January) containing a model hour of year.
pub fn month_of(hour_of_year: usize) -> usize {
    let h = hour_of_year % HOURS_PER_YEAR;
    MONTH_START[1..].iter().position(|&s| h < s).unwrap_or(11)
}

/// Assignment of the twelve months to seasons. The default is the
/// meteorological quarters MAM / JJA / SON / DJF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonCalendar {
    pub months: [Season; 12],
}

impl Default for SeasonCalendar {
    fn default() -> Self {
        use Season::*;
        Self {
            months: [
                Winter, Winter, Spring, Spring, Spring, Summer, Summer, Summer, Autumn, Autumn,
                Autumn, Winter,
            ],
        }
    }
}

impl SeasonCalendar {
    pub fn season_of(&self, hour_of_year: usize) -> Season {
        self.months[month_of(hour_of_year)]
    }

    /// Number of model hours per year falling in each season.
    pub fn hours_per_season(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for m in 0..12 {
            out[self.months[m].index()] += MONTH_START[m + 1] - MONTH_START[m];
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for s in Season::ALL {
            if !self.months.contains(&s) {
                return Err(Error::Config(format!("season {s} has no months assigned")));
            }
        }
        Ok(())
    }
}
