use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::{validate_snapshot, MarketError, MarketSnapshot};

/// One row of the market quote file. Extra columns (for example a last-trade
/// price) are accepted and ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRow {
    pub date: String,
    pub option_id: String,
    pub strike: f64,
    pub expiry: String,
    pub stock_bid: f64,
    pub stock_ask: f64,
    pub option_bid: f64,
    pub option_ask: f64,
    pub ivol: f64,
}

/// Maps calendar dates to consecutive trading-day indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn from_dates(mut days: Vec<NaiveDate>) -> Self {
        days.sort();
        days.dedup();
        Self { days }
    }

    /// `n` consecutive weekdays starting at `start` (or the next weekday).
    pub fn weekdays_from(start: NaiveDate, n: usize) -> Self {
        let mut days = Vec::with_capacity(n);
        let mut d = start;
        while days.len() < n {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                days.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        Self { days }
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<i64> {
        self.days.binary_search(&date).ok().map(|i| i as i64)
    }

    pub fn date_of(&self, index: i64) -> Option<NaiveDate> {
        usize::try_from(index).ok().and_then(|i| self.days.get(i).copied())
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    /// Validated snapshots, sorted by option id then date.
    pub snapshots: Vec<MarketSnapshot>,
    pub calendar: TradingCalendar,
    pub expiries: BTreeMap<String, String>,
    /// Rows rejected by quote validation.
    pub skipped: usize,
}

fn parse_date(value: &str) -> Result<NaiveDate, MarketError> {
    NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d").map_err(|source| MarketError::Date {
        value: value.to_string(),
        source,
    })
}

/// Reads a quote file, maps dates to trading-day indices and drops invalid
/// quotes (counted in the report, not fatal).
pub fn read_market_csv<R: Read>(reader: R) -> Result<IngestReport, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize::<MarketRow>() {
        rows.push(row?);
    }
    let mut dates = Vec::with_capacity(rows.len());
    for r in &rows {
        dates.push(parse_date(&r.date)?);
    }
    let calendar = TradingCalendar::from_dates(dates.clone());

    let mut report = IngestReport {
        calendar,
        ..Default::default()
    };
    for (row, date) in rows.into_iter().zip(dates) {
        let snap = MarketSnapshot {
            date: report.calendar.index_of(date).expect("date collected above"),
            option_id: row.option_id.clone(),
            strike: row.strike,
            s_b: row.stock_bid,
            s_a: row.stock_ask,
            u_b: row.option_bid,
            u_a: row.option_ask,
            ivol: row.ivol,
        };
        match validate_snapshot(snap) {
            Ok(s) => {
                report.expiries.entry(row.option_id).or_insert(row.expiry);
                report.snapshots.push(s);
            }
            Err(e) => {
                log::debug!("skipping row: {e}");
                report.skipped += 1;
            }
        }
    }
    if report.skipped > 0 {
        log::warn!("skipped {} invalid quote rows", report.skipped);
    }
    report
        .snapshots
        .sort_by(|a, b| a.option_id.cmp(&b.option_id).then(a.date.cmp(&b.date)));
    Ok(report)
}

/// Writes snapshots in the quote file layout. Dates come from `calendar`;
/// options without a known expiry get an empty expiry field.
pub fn write_market_csv<W: Write>(
    writer: W,
    snapshots: &[MarketSnapshot],
    calendar: &TradingCalendar,
    expiries: &BTreeMap<String, String>,
) -> Result<(), MarketError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in snapshots {
        let date = calendar.date_of(s.date).ok_or_else(|| {
            MarketError::Domain(format!("day index {} outside the calendar", s.date))
        })?;
        wtr.serialize(MarketRow {
            date: date.format("%Y-%m-%d").to_string(),
            option_id: s.option_id.clone(),
            strike: s.strike,
            expiry: expiries.get(&s.option_id).cloned().unwrap_or_default(),
            stock_bid: s.s_b,
            stock_ask: s.s_a,
            option_bid: s.u_b,
            option_ask: s.u_a,
            ivol: s.ivol,
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
