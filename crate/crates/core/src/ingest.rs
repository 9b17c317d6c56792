//! Reading hourly observation records and placing them on the model
//! calendar.

use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::calendar::{ModelClock, FEB_EXTRA_HOURS, FEB_EXTRA_START, HOURS_PER_YEAR};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_GAP: usize = 5;

/// Upper edge (exclusive) of the northern sector, degrees.
pub const NORTH_SECTOR_END: f64 = 48.0;
/// Lower edge (exclusive) of the northern sector, degrees.
pub const NORTH_SECTOR_START: f64 = 304.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Regime {
    North = 0,
    Southwest = 1,
}

impl Regime {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn other(self) -> Regime {
        match self {
            Regime::North => Regime::Southwest,
            Regime::Southwest => Regime::North,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Regime> for u8 {
    fn from(r: Regime) -> u8 {
        r as u8
    }
}

impl TryFrom<u8> for Regime {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Regime::North),
            1 => Ok(Regime::Southwest),
            other => Err(format!("regime must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub timestamp: DateTime<Utc>,
    pub hm0: Option<f64>,
    pub tm02: Option<f64>,
    pub dir: Option<f64>,
}

/// Joint hourly record on the model calendar. Index `i` of every array is
/// model hour `ModelClock::from_index(i)` counted from `origin_year`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HourlySeries {
    pub origin_year: i32,
    pub source_id: String,
    pub hm0: Vec<Option<f64>>,
    pub tm02: Vec<Option<f64>>,
    pub regime: Vec<Option<Regime>>,
}

impl HourlySeries {
    pub fn with_len(n: usize) -> Self {
        Self {
            origin_year: 0,
            source_id: String::new(),
            hm0: vec![None; n],
            tm02: vec![None; n],
            regime: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.hm0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hm0.is_empty()
    }

    /// Number of whole model years covered.
    pub fn years(&self) -> usize {
        self.len() / HOURS_PER_YEAR
    }

    pub fn clock(&self, index: usize) -> ModelClock {
        ModelClock::from_index(index)
    }

    /// Checks the structural invariants: equal lengths and physical ranges.
    pub fn validate(&self) -> Result<()> {
        let n = self.hm0.len();
        if self.tm02.len() != n || self.regime.len() != n {
            return Err(Error::invariant("series arrays differ in length"));
        }
        for (i, h) in self.hm0.iter().enumerate() {
            if let Some(h) = h {
                if !(h.is_finite() && *h >= 0.0) {
                    return Err(Error::invariant(format!("hm0[{i}] = {h} is not >= 0")));
                }
            }
        }
        for (i, t) in self.tm02.iter().enumerate() {
            if let Some(t) = t {
                if !(t.is_finite() && *t > 0.0) {
                    return Err(Error::invariant(format!("tm02[{i}] = {t} is not > 0")));
                }
            }
        }
        Ok(())
    }

    /// Restrict to model years `[first, first + count)`.
    pub fn year_slice(&self, first: usize, count: usize) -> HourlySeries {
        let lo = (first * HOURS_PER_YEAR).min(self.len());
        let hi = ((first + count) * HOURS_PER_YEAR).min(self.len());
        HourlySeries {
            origin_year: self.origin_year + first as i32,
            source_id: self.source_id.clone(),
            hm0: self.hm0[lo..hi].to_vec(),
            tm02: self.tm02[lo..hi].to_vec(),
            regime: self.regime[lo..hi].to_vec(),
        }
    }
}

/// Map a direction in degrees to its regime.
pub fn derive_regime(dir: f64) -> Result<Regime> {
    if !(0.0..360.0).contains(&dir) {
        return Err(Error::domain(format!("direction {dir} outside [0, 360)")));
    }
    if (NORTH_SECTOR_END..=NORTH_SECTOR_START).contains(&dir) {
        Ok(Regime::Southwest)
    } else {
        Ok(Regime::North)
    }
}

const HEADER: [&str; 4] = ["timestamp", "hm0_m", "tm02_s", "dir_deg"];

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    None
}

/// Parse a numeric cell. Empty cells are missing; unparsable or
/// out-of-range cells are missing and counted in `bad`.
fn parse_cell(s: &str, valid: impl Fn(f64) -> bool, bad: &mut usize) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && valid(v) => Some(v),
        _ => {
            *bad += 1;
            None
        }
    }
}

/// Parse observation CSV with header `timestamp,hm0_m,tm02_s,dir_deg`.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 4];
    for (k, name) in HEADER.iter().enumerate() {
        cols[k] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::format(format!("missing mandatory column `{name}`")))?;
    }
    let mut out: Vec<RawRecord> = Vec::new();
    let mut bad = 0usize;
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let get = |k: usize| row.get(cols[k]).unwrap_or("");
        let timestamp = parse_timestamp(get(0)).ok_or_else(|| {
            Error::format(format!(
                "row {}: unparsable timestamp `{}`",
                line + 2,
                get(0)
            ))
        })?;
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::format(format!(
                    "row {}: timestamp {} not after {}",
                    line + 2,
                    timestamp.to_rfc3339(),
                    prev.timestamp.to_rfc3339()
                )));
            }
        }
        out.push(RawRecord {
            timestamp,
            hm0: parse_cell(get(1), |v| v >= 0.0, &mut bad),
            tm02: parse_cell(get(2), |v| v > 0.0, &mut bad),
            dir: parse_cell(get(3), |v| (0.0..360.0).contains(&v), &mut bad),
        });
    }
    if bad > 0 {
        log::warn!("{bad} malformed or out-of-range numeric cells treated as missing");
    }
    Ok(out)
}

/// Model hour of year for a civil hour of year, or `None` when the hour is
/// dropped (the last 18 hours of Feb 29).
pub fn civil_to_model_hour(civil_hour: usize, leap: bool) -> Option<usize> {
    if leap {
        let keep_until = FEB_EXTRA_START + FEB_EXTRA_HOURS;
        if civil_hour < keep_until {
            Some(civil_hour)
        } else if civil_hour < FEB_EXTRA_START + 24 {
            None
        } else {
            Some(civil_hour - (24 - FEB_EXTRA_HOURS))
        }
    } else if civil_hour < FEB_EXTRA_START {
        Some(civil_hour)
    } else {
        Some(civil_hour + FEB_EXTRA_HOURS)
    }
}

fn is_leap(year: i32) -> bool {
    NaiveDate::from_ymd_opt(year, 2, 29).is_some()
}

fn civil_hour_of_year(t: &DateTime<Utc>) -> usize {
    (t.ordinal0() as usize) * 24 + t.hour() as usize
}

/// Place records spanning whole civil years onto the model calendar.
pub fn to_model_calendar(records: &[RawRecord]) -> Result<HourlySeries> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Ok(HourlySeries::default());
    };
    let y0 = first.timestamp.year();
    let y1 = last.timestamp.year();
    if civil_hour_of_year(&first.timestamp) != 0 {
        return Err(Error::size(format!(
            "records start at {}, expected {y0}-01-01T00:00Z (whole years required)",
            first.timestamp.to_rfc3339()
        )));
    }
    let last_hours = if is_leap(y1) { 8784 } else { 8760 };
    if civil_hour_of_year(&last.timestamp) != last_hours - 1 {
        return Err(Error::size(format!(
            "records end at {}, expected {y1}-12-31T23:00Z (whole years required)",
            last.timestamp.to_rfc3339()
        )));
    }
    let years = (y1 - y0 + 1) as usize;
    let mut series = HourlySeries::with_len(years * HOURS_PER_YEAR);
    series.origin_year = y0;
    let mut duplicates = 0usize;
    let mut filled = vec![false; series.len()];
    for r in records {
        let y = r.timestamp.year();
        let Some(h) = civil_to_model_hour(civil_hour_of_year(&r.timestamp), is_leap(y)) else {
            continue;
        };
        let idx = (y - y0) as usize * HOURS_PER_YEAR + h;
        if filled[idx] {
            duplicates += 1;
            continue;
        }
        filled[idx] = true;
        series.hm0[idx] = r.hm0;
        series.tm02[idx] = r.tm02;
        series.regime[idx] = r.dir.and_then(|d| derive_regime(d).ok());
    }
    if duplicates > 0 {
        log::warn!("{duplicates} records fell into an already occupied hour and were ignored");
    }
    Ok(series)
}

fn jointly_missing(s: &HourlySeries, i: usize) -> bool {
    s.hm0[i].is_none() && s.tm02[i].is_none() && s.regime[i].is_none()
}

fn lerp_fill(v: &mut [Option<f64>], start: usize, len: usize) {
    let (Some(a), Some(b)) = (v[start - 1], v[start + len]) else {
        return;
    };
    for k in 0..len {
        let w = (k + 1) as f64 / (len + 1) as f64;
        v[start + k] = Some(a + w * (b - a));
    }
}

/// Fill runs of jointly missing hours no longer than `max_gap`. Heights
/// and periods are interpolated linearly, regimes by nearest neighbour
/// with ties going to the preceding value. Runs touching the series edges
/// are left alone.
pub fn interpolate_short_gaps(series: &HourlySeries, max_gap: usize) -> Result<HourlySeries> {
    if max_gap < 1 {
        return Err(Error::Config("max_gap must be at least 1".into()));
    }
    let mut out = series.clone();
    let n = out.len();
    let mut i = 0;
    while i < n {
        if !jointly_missing(series, i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && jointly_missing(series, i) {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == n || len > max_gap {
            continue;
        }
        lerp_fill(&mut out.hm0, start, len);
        lerp_fill(&mut out.tm02, start, len);
        let left = series.regime[start - 1];
        let right = series.regime[i];
        for k in 0..len {
            let d_left = k + 1;
            let d_right = len - k;
            out.regime[start + k] = match (left, right) {
                (Some(l), Some(r)) => Some(if d_left <= d_right { l } else { r }),
                (Some(l), None) => Some(l),
                (None, Some(r)) => Some(r),
                (None, None) => None,
            };
        }
    }
    Ok(out)
}

/// Header of the model-calendar CSV written by simulations.
pub const MODEL_CSV_HEADER: [&str; 5] = ["model_year", "hour_of_year", "hm0_m", "tm02_s", "regime"];

/// Write a series as `model_year,hour_of_year,hm0_m,tm02_s,regime`.
/// Missing values are written as empty cells.
pub fn write_model_csv<W: Write>(series: &HourlySeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MODEL_CSV_HEADER)?;
    // Shortest round-trip formatting keeps reloaded values bit-identical.
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for i in 0..series.len() {
        let c = ModelClock::from_index(i);
        w.write_record([
            c.year_index.to_string(),
            c.hour_of_year.to_string(),
            fmt(series.hm0[i]),
            fmt(series.tm02[i]),
            series.regime[i]
                .map(|r| r.as_u8().to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a model-calendar CSV as written by [`write_model_csv`].
pub fn read_model_csv<R: Read>(reader: R) -> Result<HourlySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != MODEL_CSV_HEADER {
        return Err(Error::format(format!(
            "expected header `{}`",
            MODEL_CSV_HEADER.join(",")
        )));
    }
    let mut series = HourlySeries::default();
    let mut bad = 0usize;
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let expected = ModelClock::from_index(series.len());
        let year: usize = row[0]
            .parse()
            .map_err(|_| Error::format(format!("row {}: bad model_year", line + 2)))?;
        let hour: usize = row[1]
            .parse()
            .map_err(|_| Error::format(format!("row {}: bad hour_of_year", line + 2)))?;
        if (year, hour) != (expected.year_index, expected.hour_of_year) {
            return Err(Error::format(format!(
                "row {}: expected model hour ({}, {}), found ({year}, {hour})",
                line + 2,
                expected.year_index,
                expected.hour_of_year
            )));
        }
        series.hm0.push(parse_cell(&row[2], |v| v >= 0.0, &mut bad));
        series.tm02.push(parse_cell(&row[3], |v| v > 0.0, &mut bad));
        series.regime.push(match row[4].trim() {
            "" => None,
            "0" => Some(Regime::North),
            "1" => Some(Regime::Southwest),
            _ => {
                bad += 1;
                None
            }
        });
    }
    if bad > 0 {
        log::warn!("{bad} malformed cells in model CSV treated as missing");
    }
    Ok(series)
}

/// Read either CSV layout, detected from the header row.
pub fn read_series_auto<R: Read>(mut reader: R) -> Result<HourlySeries> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let header = text.lines().next().unwrap_or("");
    if header.trim_start().starts_with("model_year") {
        read_model_csv(text.as_bytes())
    } else {
        to_model_calendar(&parse_csv(text.as_bytes())?)
    }
}
