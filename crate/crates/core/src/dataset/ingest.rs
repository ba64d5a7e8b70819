use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};

use super::PriceTable;
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 timestamp. Offsets are converted to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads a `timestamp,SYM1,SYM2,...` CSV of mid-prices.
///
/// Rows are sorted by timestamp; duplicate timestamps are rejected. Empty
/// cells are forward-filled from the previous row, and leading rows before
/// every symbol has printed a price are dropped.
pub fn ingest_csv(path: &Path, expected_interval: Duration) -> Result<PriceTable> {
    if expected_interval <= Duration::zero() {
        return Err(Error::invalid("expected interval must be positive"));
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("timestamp") {
        return Err(parse_err(
            1,
            "header must be `timestamp,<sym1>,<sym2>,...`".into(),
        ));
    }
    let symbols: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(s) = symbols.iter().find(|s| s.is_empty()) {
        return Err(parse_err(1, format!("empty symbol name {s:?}")));
    }

    let mut rows: Vec<(NaiveDateTime, usize, Vec<Option<f64>>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| parse_err(line, format!("unparsable timestamp {:?}", &record[0])))?;
        let mut cells = Vec::with_capacity(symbols.len());
        for (cell, sym) in record.iter().skip(1).zip(&symbols) {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("{sym}: unparsable price {cell:?}")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(parse_err(
                    line,
                    format!("{sym}: price must be positive, got {v}"),
                ));
            }
            cells.push(Some(v));
        }
        rows.push((ts, line, cells));
    }

    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap.is_zero() {
            return Err(parse_err(w[1].1, format!("duplicate timestamp {}", w[1].0)));
        }
        let step = expected_interval.num_milliseconds();
        if gap.num_milliseconds() % step != 0 {
            return Err(parse_err(
                w[1].1,
                format!(
                    "gap of {}s after {} is not a multiple of {}s",
                    gap.num_seconds(),
                    w[0].0,
                    expected_interval.num_seconds()
                ),
            ));
        }
    }

    for (s, sym) in symbols.iter().enumerate() {
        if rows.iter().all(|r| r.2[s].is_none()) {
            return Err(Error::invalid(format!(
                "{}: symbol column {sym} is entirely empty",
                path.display()
            )));
        }
    }

    let mut last: Vec<Option<f64>> = vec![None; symbols.len()];
    let mut timestamps = Vec::new();
    let mut prices: Vec<Vec<f64>> = vec![Vec::new(); symbols.len()];
    for (ts, _, cells) in rows {
        for (l, c) in last.iter_mut().zip(cells) {
            if c.is_some() {
                *l = c;
            }
        }
        if last.iter().all(Option::is_some) {
            timestamps.push(ts);
            for (series, l) in prices.iter_mut().zip(&last) {
                series.push(l.expect("checked above"));
            }
        }
    }
    PriceTable::new(timestamps, symbols, prices)
}
