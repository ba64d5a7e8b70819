//! Price ingestion, engineered features, direction labels and synthetic
//! corpora.
//!
//! One feature row per timestamp carries every symbol's features; the label
//! row carries every symbol's direction class for the next interval.

mod features;
mod ingest;
pub mod io;
mod labels;
mod normalize;
mod synthetic;

use std::fmt;
use std::ops::Range;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::Matrix;

pub use features::{build_features, FeatureConfig};
pub use ingest::{ingest_csv, parse_timestamp, TIMESTAMP_FORMAT};
pub use labels::{
    balanced_threshold, decode_one_hot, encode_one_hot, labels_from_prices, make_labels,
    DiffScaler, Threshold,
};
pub use normalize::{normalize, ColumnStats, STD_FLOOR};
pub use synthetic::{gen_synthetic, SyntheticKind, SyntheticSpec};

/// Aligned mid-price series on a shared timestamp grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    timestamps: Vec<NaiveDateTime>,
    symbols: Vec<String>,
    /// One series per symbol, each aligned to `timestamps`.
    prices: Vec<Vec<f64>>,
}

impl PriceTable {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        symbols: Vec<String>,
        prices: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("price table needs at least one symbol"));
        }
        if prices.len() != symbols.len() {
            return Err(Error::invalid(format!(
                "{} symbols but {} price series",
                symbols.len(),
                prices.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at {}",
                w[1]
            )));
        }
        for (sym, series) in symbols.iter().zip(&prices) {
            if series.len() != timestamps.len() {
                return Err(Error::invalid(format!(
                    "symbol {sym}: {} prices for {} timestamps",
                    series.len(),
                    timestamps.len()
                )));
            }
            if let Some(p) = series.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::invalid(format!(
                    "symbol {sym}: non-positive price {p}"
                )));
            }
        }
        Ok(Self {
            timestamps,
            symbols,
            prices,
        })
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn series(&self, s: usize) -> &[f64] {
        &self.prices[s]
    }

    /// Next-interval differences `p[t+1] - p[t]` for `t in 0..n-1`, one column
    /// per symbol.
    pub fn next_diffs(&self) -> Result<Matrix> {
        let n = self.n_rows();
        if n < 2 {
            return Err(Error::InsufficientRows {
                required: 2,
                available: n,
            });
        }
        Ok(Matrix::from_fn(n - 1, self.n_symbols(), |t, s| {
            self.prices[s][t + 1] - self.prices[s][t]
        }))
    }

    /// Writes the table in the ingestion CSV layout.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("timestamp");
        for s in &self.symbols {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for (t, ts) in self.timestamps.iter().enumerate() {
            out.push_str(&ts.format(TIMESTAMP_FORMAT).to_string());
            for series in &self.prices {
                out.push(',');
                out.push_str(&series[t].to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    PriceDiff,
    LaggedDiff,
    MovingAverage,
    PairCorrelation,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::PriceDiff => "price_diff",
            FeatureKind::LaggedDiff => "lagged_diff",
            FeatureKind::MovingAverage => "moving_average",
            FeatureKind::PairCorrelation => "pair_correlation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "price_diff" => FeatureKind::PriceDiff,
            "lagged_diff" => FeatureKind::LaggedDiff,
            "moving_average" => FeatureKind::MovingAverage,
            "pair_correlation" => FeatureKind::PairCorrelation,
            _ => return None,
        })
    }
}

/// What one feature column holds. `lag_or_window` is 0 for `price_diff` and
/// the correlation window for `pair_correlation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub kind: FeatureKind,
    pub symbol: String,
    pub lag_or_window: usize,
    pub partner: Option<String>,
}

impl fmt::Display for FeatureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.kind.as_str(),
            self.symbol,
            self.lag_or_window,
            self.partner.as_deref().unwrap_or("")
        )
    }
}

/// Integer matrix of direction classes in {-1, 0, +1}, one row per
/// observation and one column per symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    rows: usize,
    n_symbols: usize,
    data: Vec<i8>,
}

impl LabelMatrix {
    pub fn new(rows: usize, n_symbols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * n_symbols {
            return Err(Error::invalid(format!(
                "label matrix {rows}x{n_symbols} needs {} values, got {}",
                rows * n_symbols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::invalid(format!("label {v} outside {{-1, 0, 1}}")));
        }
        Ok(Self {
            rows,
            n_symbols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged label rows"));
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn get(&self, r: usize, s: usize) -> i8 {
        self.data[r * self.n_symbols + s]
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.data[r * self.n_symbols..(r + 1) * self.n_symbols]
    }

    pub fn column(&self, s: usize) -> Vec<i8> {
        (0..self.rows).map(|r| self.get(r, s)).collect()
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Result<Self> {
        check_range(&range, self.rows)?;
        Ok(Self {
            rows: range.len(),
            n_symbols: self.n_symbols,
            data: self.data[range.start * self.n_symbols..range.end * self.n_symbols].to_vec(),
        })
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_symbols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            n_symbols: self.n_symbols,
            data,
        }
    }
}

/// One-hot targets, one row per observation and `3 · n_symbols` columns.
/// Symbol `s` owns columns `3s..3s+3` ordered (-1, 0, +1).
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTargets {
    pub y: Matrix,
    pub n_symbols: usize,
}

/// Engineered features for a run of consecutive timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    /// N×M observations.
    pub x: Matrix,
    pub descriptors: Vec<FeatureDescriptor>,
    pub symbols: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    /// N×S mid-price at each row's timestamp.
    pub prices: Matrix,
    /// N×S raw next-interval price difference; the quantity labels classify.
    pub next_diffs: Matrix,
    /// Present once [`FeatureFrame::relabel`] has run.
    pub labels: Option<LabelMatrix>,
    /// Present once the frame has been normalized.
    pub norm_stats: Option<Vec<ColumnStats>>,
    /// Leading price-table rows dropped because a feature was undefined.
    pub warmup_rows: usize,
}

impl FeatureFrame {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    /// Recomputes labels with next-diff statistics fitted on `fit_rows`.
    pub fn relabel(&mut self, threshold: Threshold, fit_rows: Range<usize>) -> Result<f64> {
        check_range(&fit_rows, self.n_rows())?;
        let scaler = DiffScaler::fit(&self.next_diffs, fit_rows.clone());
        let theta = match threshold {
            Threshold::Fixed(t) => t,
            Threshold::Balanced => balanced_threshold(&self.next_diffs, &scaler, fit_rows)?,
        };
        self.labels = Some(make_labels(&self.next_diffs, theta, &scaler)?);
        Ok(theta)
    }

    pub fn labels(&self) -> Result<&LabelMatrix> {
        self.labels
            .as_ref()
            .ok_or_else(|| Error::invalid("feature frame has not been labelled"))
    }
}

pub(crate) fn check_range(range: &Range<usize>, len: usize) -> Result<()> {
    if range.start >= range.end || range.end > len {
        return Err(Error::invalid(format!(
            "row range {range:?} outside 0..{len}"
        )));
    }
    Ok(())
}
