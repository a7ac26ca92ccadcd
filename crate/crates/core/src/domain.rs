//! Metaorder records, the data-cleaning filters, price rescaling and the
//! grouping of records into one panel per (symbol, day).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{canonical_sum, compensated_sum, Scalar};

/// Column names of the metaorder CSV, in order.
pub const RECORD_HEADER: [&str; 13] = [
    "date",
    "symbol",
    "broker_id",
    "sign",
    "shares",
    "start_time",
    "end_time",
    "day_volume",
    "exec_volume",
    "open",
    "high",
    "low",
    "close",
];

/// Column names of the panel CSV, in order.
pub const PANEL_HEADER: [&str; 6] = ["symbol", "date", "n", "net_flow", "rescaled_return", "phis"];

/// Tolerance on Σ|φ_i| ≤ 1 and on Φ = Σφ_i.
pub const PANEL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Buy,
    Sell,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Buy => 1.0,
            Sign::Sell => -1.0,
        }
    }

    pub fn from_i8(x: i8) -> Option<Sign> {
        match x {
            1 => Some(Sign::Buy),
            -1 => Some(Sign::Sell),
            _ => None,
        }
    }
}

/// One metaorder as reported by the broker data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaorderRecord {
    pub date: NaiveDate,
    pub symbol: String,
    pub broker_id: String,
    pub sign: Sign,
    pub shares: f64,
    pub start_time: NaiveTime,
    pub end_time: NaiveTime,
    /// Total volume traded in the stock that day.
    pub day_volume: f64,
    /// Market volume traded between start and end of the metaorder, if known.
    pub exec_volume: Option<f64>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl MetaorderRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive, got {x}")))
            }
        };
        positive("shares", self.shares)?;
        positive("day_volume", self.day_volume)?;
        if let Some(v) = self.exec_volume {
            positive("exec_volume", v)?;
        }
        for (name, p) in [("open", self.open), ("high", self.high), ("low", self.low), ("close", self.close)] {
            positive(name, p)?;
        }
        if self.start_time >= self.end_time {
            return Err(Error::domain(format!(
                "start_time {} is not before end_time {}",
                self.start_time, self.end_time
            )));
        }
        if self.high < self.open.max(self.close) || self.low > self.open.min(self.close) {
            return Err(Error::domain(format!(
                "prices inconsistent: open={} high={} low={} close={}",
                self.open, self.high, self.low, self.close
            )));
        }
        if self.shares > self.day_volume {
            return Err(Error::domain(format!(
                "shares {} exceed day_volume {}",
                self.shares, self.day_volume
            )));
        }
        Ok(())
    }

    /// Signed volume fraction φ = ε·|Q|/V.
    pub fn phi(&self) -> f64 {
        self.sign.as_f64() * self.shares / self.day_volume
    }

    pub fn duration(&self) -> TimeDelta {
        self.end_time - self.start_time
    }

    /// Participation rate |Q| / (V(t_e) − V(t_s)), when the interval volume is known.
    pub fn participation(&self) -> Option<f64> {
        self.exec_volume.map(|v| self.shares / v)
    }
}

/// Settings of the four cleaning filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Filter 1: keep only these symbols. `None` keeps every symbol.
    pub symbol_whitelist: Option<BTreeSet<String>>,
    /// Filter 2: metaorders must end strictly before this time.
    pub latest_end: NaiveTime,
    /// Filter 3: metaorders must last strictly longer than this.
    pub min_duration: TimeDelta,
    /// Filter 4: participation rate must be strictly below this.
    pub max_participation: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            symbol_whitelist: None,
            latest_end: NaiveTime::from_hms_opt(16, 1, 0).expect("valid time"),
            min_duration: TimeDelta::minutes(2),
            max_participation: 0.30,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_participation > 0.0 && self.max_participation <= 1.0) {
            return Err(Error::Config(format!(
                "max_participation must lie in (0, 1], got {}",
                self.max_participation
            )));
        }
        Ok(())
    }
}

/// Rejection counts per filter. A record is charged to the first filter it fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub filter_1: usize,
    pub filter_2: usize,
    pub filter_3: usize,
    pub filter_4: usize,
    /// Records that passed filter 4 only because their interval volume is missing.
    pub missing_exec_volume: usize,
    pub kept: usize,
}

/// Applies filters 1 to 4 and reports how many records each removed.
pub fn apply_filters(records: &[MetaorderRecord], config: &FilterConfig) -> (Vec<MetaorderRecord>, FilterReport) {
    let mut report = FilterReport { input: records.len(), ..FilterReport::default() };
    let mut kept = Vec::with_capacity(records.len());
    for record in records {
        if let Some(whitelist) = &config.symbol_whitelist {
            if !whitelist.contains(&record.symbol) {
                report.filter_1 += 1;
                continue;
            }
        }
        if record.end_time >= config.latest_end {
            report.filter_2 += 1;
            continue;
        }
        if record.duration() <= config.min_duration {
            report.filter_3 += 1;
            continue;
        }
        match record.participation() {
            Some(rate) if !(rate < config.max_participation) => {
                report.filter_4 += 1;
                continue;
            }
            Some(_) => {}
            None => report.missing_exec_volume += 1,
        }
        kept.push(record.clone());
    }
    report.kept = kept.len();
    (kept, report)
}

/// Open-to-close return in units of the daily volatility proxy σ = (high − low)/open:
/// (ln close − ln open)/σ.
pub fn rescale_return<T: Scalar>(open: T, high: T, low: T, close: T) -> Result<T> {
    for p in [open, high, low, close] {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::domain(format!("prices must be positive, got {p}")));
        }
    }
    if high == low {
        return Err(Error::DegenerateVolatility(high.to_f64().unwrap_or(f64::NAN)));
    }
    if high < low {
        return Err(Error::domain(format!("high {high} is below low {low}")));
    }
    let sigma = (high - low) / open;
    Ok((close.ln() - open.ln()) / sigma)
}

/// All metaorders executed on one stock on one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayPanel {
    pub symbol: String,
    pub date: NaiveDate,
    pub phis: Vec<f64>,
    pub n: usize,
    /// Net order flow Φ = Σφ_i.
    pub net_flow: f64,
    pub rescaled_return: f64,
}

impl DayPanel {
    /// Builds a validated panel, computing N and Φ from `phis` (Φ by an
    /// order-independent sum).
    pub fn new(symbol: impl Into<String>, date: NaiveDate, phis: Vec<f64>, rescaled_return: f64) -> Result<Self> {
        let panel = Self {
            symbol: symbol.into(),
            date,
            n: phis.len(),
            net_flow: canonical_sum(phis.iter().copied()),
            phis,
            rescaled_return,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn group_name(&self) -> String {
        format!("{}/{}", self.symbol, self.date)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::DataInconsistency { group: self.group_name(), reason };
        if self.phis.is_empty() || self.n != self.phis.len() {
            return Err(bad(format!("n = {} but {} fractions", self.n, self.phis.len())));
        }
        if self.phis.iter().any(|x| !x.is_finite() || x.abs() > 1.0) || !self.rescaled_return.is_finite() {
            return Err(bad("fractions must be finite and in [-1, 1], return finite".into()));
        }
        let sum = canonical_sum(self.phis.iter().copied());
        if (sum - self.net_flow).abs() > PANEL_TOLERANCE {
            return Err(bad(format!("net_flow {} differs from sum of phis {sum}", self.net_flow)));
        }
        let gross = compensated_sum(self.phis.iter().map(|x| x.abs()));
        if gross > 1.0 + PANEL_TOLERANCE {
            return Err(bad(format!("total volume fraction {gross} exceeds 1")));
        }
        Ok(())
    }

    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        self.phis.iter().map(|x| x.signum())
    }
}

/// Groups records by (symbol, date), keeping input order within a group.
/// Panels come out sorted by (symbol, date).
pub fn build_panels(records: &[MetaorderRecord]) -> Result<Vec<DayPanel>> {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<&MetaorderRecord>> = BTreeMap::new();
    for record in records {
        groups.entry((record.symbol.as_str(), record.date)).or_default().push(record);
    }
    groups
        .into_iter()
        .map(|((symbol, date), members)| {
            let first = members[0];
            let group = || format!("{symbol}/{date}");
            for other in &members[1..] {
                let same_prices = (other.open, other.high, other.low, other.close)
                    == (first.open, first.high, first.low, first.close);
                if !same_prices {
                    return Err(Error::DataInconsistency {
                        group: group(),
                        reason: "records disagree on open/high/low/close".into(),
                    });
                }
                if other.day_volume != first.day_volume {
                    return Err(Error::DataInconsistency {
                        group: group(),
                        reason: "records disagree on day_volume".into(),
                    });
                }
            }
            let ret = rescale_return(first.open, first.high, first.low, first.close).map_err(|e| {
                Error::DataInconsistency { group: group(), reason: e.to_string() }
            })?;
            DayPanel::new(symbol, date, members.iter().map(|r| r.phi()).collect(), ret)
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(line: u64, column: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e| Error::Parse {
        line,
        reason: format!("column {column}: cannot parse {raw:?}: {e}"),
    })
}

fn check_header(found: &csv::StringRecord, expected: &[&str], line: u64) -> Result<()> {
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line,
            reason: format!(
                "bad header {:?}; expected exactly: {}",
                found.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            ),
        });
    }
    Ok(())
}

/// Reads metaorder records. An empty input yields no records.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<MetaorderRecord>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut rows = csv.records();
    let Some(header) = rows.next() else {
        return Ok(Vec::new());
    };
    check_header(&header?, &RECORD_HEADER, 1)?;
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RECORD_HEADER.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} columns, found {}", RECORD_HEADER.len(), row.len()),
            });
        }
        let time = |column: &str, raw: &str| {
            NaiveTime::parse_from_str(raw.trim(), "%H:%M:%S").map_err(|e| Error::Parse {
                line,
                reason: format!("column {column}: cannot parse {raw:?} as HH:MM:SS: {e}"),
            })
        };
        let sign_raw: i8 = parse_field(line, "sign", &row[3])?;
        let record = MetaorderRecord {
            date: NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                reason: format!("column date: cannot parse {:?} as YYYY-MM-DD: {e}", &row[0]),
            })?,
            symbol: row[1].trim().to_string(),
            broker_id: row[2].trim().to_string(),
            sign: Sign::from_i8(sign_raw).ok_or_else(|| Error::Parse {
                line,
                reason: format!("column sign: expected 1 or -1, got {sign_raw}"),
            })?,
            shares: parse_field(line, "shares", &row[4])?,
            start_time: time("start_time", &row[5])?,
            end_time: time("end_time", &row[6])?,
            day_volume: parse_field(line, "day_volume", &row[7])?,
            exec_volume: match row[8].trim() {
                "" => None,
                raw => Some(parse_field(line, "exec_volume", raw)?),
            },
            open: parse_field(line, "open", &row[9])?,
            high: parse_field(line, "high", &row[10])?,
            low: parse_field(line, "low", &row[11])?,
            close: parse_field(line, "close", &row[12])?,
        };
        record.validate().map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_records<W: Write>(writer: W, records: &[MetaorderRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(RECORD_HEADER)?;
    for r in records {
        let sign = match r.sign {
            Sign::Buy => "1",
            Sign::Sell => "-1",
        };
        csv.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.symbol.clone(),
            r.broker_id.clone(),
            sign.to_string(),
            r.shares.to_string(),
            r.start_time.format("%H:%M:%S").to_string(),
            r.end_time.format("%H:%M:%S").to_string(),
            r.day_volume.to_string(),
            r.exec_volume.map(|v| v.to_string()).unwrap_or_default(),
            r.open.to_string(),
            r.high.to_string(),
            r.low.to_string(),
            r.close.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes panels; floats use the shortest representation that round-trips.
pub fn write_panels<W: Write>(writer: W, panels: &[DayPanel]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(PANEL_HEADER)?;
    for p in panels {
        let phis: Vec<String> = p.phis.iter().map(|x| x.to_string()).collect();
        csv.write_record([
            p.symbol.clone(),
            p.date.format("%Y-%m-%d").to_string(),
            p.n.to_string(),
            p.net_flow.to_string(),
            p.rescaled_return.to_string(),
            phis.join(";"),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_panels<R: Read>(reader: R) -> Result<Vec<DayPanel>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut rows = csv.records();
    let Some(header) = rows.next() else {
        return Ok(Vec::new());
    };
    check_header(&header?, &PANEL_HEADER, 1)?;
    let mut out = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != PANEL_HEADER.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} columns, found {}", PANEL_HEADER.len(), row.len()),
            });
        }
        let phis = row[5]
            .split(';')
            .map(|raw| parse_field::<f64>(line, "phis", raw))
            .collect::<Result<Vec<_>>>()?;
        let panel = DayPanel {
            symbol: row[0].trim().to_string(),
            date: NaiveDate::parse_from_str(row[1].trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                reason: format!("column date: cannot parse {:?}: {e}", &row[1]),
            })?,
            n: parse_field(line, "n", &row[2])?,
            net_flow: parse_field(line, "net_flow", &row[3])?,
            rescaled_return: parse_field(line, "rescaled_return", &row[4])?,
            phis,
        };
        panel.validate().map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        out.push(panel);
    }
    Ok(out)
}
