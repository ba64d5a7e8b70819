//! One-lot buy-hold-sell simulation driven by direction labels, and the
//! return, Sharpe, drawdown and benchmark-correlation metrics built on it.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::dataset::TIMESTAMP_FORMAT;
use crate::error::{Error, Result};

pub const DEFAULT_INITIAL_CASH: f64 = 100_000.0;
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub symbol: String,
    pub initial_margin: f64,
    pub maintenance_margin: f64,
    pub contract_size: f64,
}

impl ContractSpec {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.initial_margin,
            self.maintenance_margin,
            self.contract_size,
        ];
        if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "contract {}: margins and size must be positive",
                self.symbol
            )));
        }
        Ok(())
    }
}

/// What a 0 label does to the open position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroLabel {
    /// Keep whatever position is open.
    #[default]
    Hold,
    /// Close out to flat.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityCurve {
    pub timestamps: Vec<NaiveDateTime>,
    /// Lots held from each timestamp to the next.
    pub positions: Vec<i8>,
    /// Cumulative unrealized P&L in USD, starting at 0.
    pub pnl: Vec<f64>,
}

/// `labels[t]` sets the position held from `prices[t]` to `prices[t+1]`.
/// Returns positions and cumulative P&L, both of length `prices.len()`;
/// the last position is the one left open at the end.
pub fn simulate_series(
    prices: &[f64],
    labels: &[i8],
    contract_size: f64,
    zero: ZeroLabel,
) -> Result<(Vec<i8>, Vec<f64>)> {
    if prices.len() != labels.len() + 1 {
        return Err(Error::invalid(format!(
            "{} prices need {} labels, got {}",
            prices.len(),
            prices.len().saturating_sub(1),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|l| !(-1..=1).contains(*l)) {
        return Err(Error::invalid(format!("label {l} outside {{-1, 0, 1}}")));
    }
    let mut positions = Vec::with_capacity(prices.len());
    let mut pnl = Vec::with_capacity(prices.len());
    let mut pos = 0i8;
    pnl.push(0.0);
    for (t, &label) in labels.iter().enumerate() {
        pos = match (label, zero) {
            (0, ZeroLabel::Hold) => pos,
            _ => label,
        };
        positions.push(pos);
        let last = pnl[t];
        pnl.push(last + f64::from(pos) * contract_size * (prices[t + 1] - prices[t]));
    }
    positions.push(pos);
    Ok((positions, pnl))
}

pub fn simulate(
    timestamps: &[NaiveDateTime],
    prices: &[f64],
    labels: &[i8],
    spec: &ContractSpec,
    zero: ZeroLabel,
) -> Result<EquityCurve> {
    spec.validate()?;
    if timestamps.len() != prices.len() {
        return Err(Error::invalid(format!(
            "{} timestamps for {} prices",
            timestamps.len(),
            prices.len()
        )));
    }
    let (positions, pnl) = simulate_series(prices, labels, spec.contract_size, zero)?;
    Ok(EquityCurve {
        timestamps: timestamps.to_vec(),
        positions,
        pnl,
    })
}

/// Sign of each next price move.
pub fn perfect_foresight_labels(prices: &[f64]) -> Vec<i8> {
    prices
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// P&L change per calendar day present in the curve, over `initial_cash`.
/// The move from `t` to `t+1` counts toward the day of `t+1`.
pub fn daily_returns(curve: &EquityCurve, initial_cash: f64) -> Result<Vec<(NaiveDate, f64)>> {
    if curve.timestamps.is_empty() || curve.pnl.len() != curve.timestamps.len() {
        return Err(Error::invalid("equity curve is empty or misaligned"));
    }
    if !(initial_cash > 0.0) {
        return Err(Error::invalid("initial cash must be positive"));
    }
    let mut days: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    days.insert(curve.timestamps[0].date(), 0.0);
    for t in 1..curve.pnl.len() {
        *days.entry(curve.timestamps[t].date()).or_insert(0.0) += curve.pnl[t] - curve.pnl[t - 1];
    }
    Ok(days
        .into_iter()
        .map(|(d, v)| (d, v / initial_cash))
        .collect())
}

fn mean_and_sample_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean over sample standard deviation of daily returns, times √252.
/// `None` for fewer than two days or zero dispersion.
pub fn sharpe_annualized(daily: &[f64]) -> Option<f64> {
    if daily.len() < 2 {
        return None;
    }
    let (mean, std) = mean_and_sample_std(daily);
    (std > 0.0).then(|| mean / std * TRADING_DAYS.sqrt())
}

/// `SR · √n / 3`.
pub fn capability_ratio(sharpe_annualized: f64, n_days: usize) -> f64 {
    sharpe_annualized * (n_days as f64).sqrt() / 3.0
}

/// Largest fall from a running peak.
pub fn max_drawdown(pnl: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in pnl {
        peak = peak.max(v);
        worst = worst.max(peak - v);
    }
    worst
}

/// Pearson correlation over dates present in both series. Errors when no
/// date is shared; `None` when either side has no variance or fewer than two
/// dates are shared.
pub fn benchmark_correlation(
    strategy: &[(NaiveDate, f64)],
    benchmark: &[(NaiveDate, f64)],
) -> Result<Option<f64>> {
    let bench: BTreeMap<NaiveDate, f64> = benchmark.iter().copied().collect();
    let (a, b): (Vec<f64>, Vec<f64>) = strategy
        .iter()
        .filter_map(|(d, v)| bench.get(d).map(|w| (*v, *w)))
        .unzip();
    if a.is_empty() {
        return Err(Error::invalid("strategy and benchmark share no dates"));
    }
    if a.len() < 2 {
        return Ok(None);
    }
    let (ma, mb) = (mean_and_sample_std(&a).0, mean_and_sample_std(&b).0);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Strategy statistics for one symbol over one test window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub symbol: String,
    pub window: usize,
    pub days: usize,
    pub mean_daily_return: f64,
    pub sharpe: Option<f64>,
    pub capability: Option<f64>,
    pub max_drawdown: f64,
    pub final_pnl: f64,
    pub benchmark_correlation: Option<f64>,
}

pub fn window_metrics(
    symbol: &str,
    window: usize,
    curve: &EquityCurve,
    initial_cash: f64,
    benchmark: Option<&[(NaiveDate, f64)]>,
) -> Result<WindowMetrics> {
    let daily = daily_returns(curve, initial_cash)?;
    let values: Vec<f64> = daily.iter().map(|d| d.1).collect();
    let sharpe = sharpe_annualized(&values);
    let benchmark_correlation = match benchmark {
        Some(b) => benchmark_correlation(&daily, b)?,
        None => None,
    };
    Ok(WindowMetrics {
        symbol: symbol.to_string(),
        window,
        days: values.len(),
        mean_daily_return: mean_and_sample_std(&values).0,
        sharpe,
        capability: sharpe.map(|s| capability_ratio(s, values.len())),
        max_drawdown: max_drawdown(&curve.pnl),
        final_pnl: *curve.pnl.last().expect("non-empty curve"),
        benchmark_correlation,
    })
}

/// Mean, sample std, max and min over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let (mean, std) = mean_and_sample_std(&v);
        Some(Self {
            n: v.len(),
            mean,
            std,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolMetrics {
    pub symbol: String,
    pub mean_daily_return: Option<Spread>,
    pub sharpe: Option<Spread>,
    pub capability: Option<Spread>,
    pub max_drawdown: Option<Spread>,
    pub benchmark_correlation: Option<Spread>,
}

/// Cross-window summary per symbol, in order of first appearance.
pub fn summarize(windows: &[WindowMetrics]) -> Vec<SymbolMetrics> {
    let mut order: Vec<&str> = Vec::new();
    for w in windows {
        if !order.contains(&w.symbol.as_str()) {
            order.push(&w.symbol);
        }
    }
    order
        .into_iter()
        .map(|sym| {
            let rows: Vec<&WindowMetrics> = windows.iter().filter(|w| w.symbol == sym).collect();
            SymbolMetrics {
                symbol: sym.to_string(),
                mean_daily_return: Spread::of(rows.iter().map(|w| w.mean_daily_return)),
                sharpe: Spread::of(rows.iter().filter_map(|w| w.sharpe)),
                capability: Spread::of(rows.iter().filter_map(|w| w.capability)),
                max_drawdown: Spread::of(rows.iter().map(|w| w.max_drawdown)),
                benchmark_correlation: Spread::of(
                    rows.iter().filter_map(|w| w.benchmark_correlation),
                ),
            }
        })
        .collect()
}

/// `timestamp,position,pnl` rows.
pub fn equity_csv(curve: &EquityCurve) -> String {
    let mut out = String::from("timestamp,position,pnl\n");
    for ((ts, pos), pnl) in curve
        .timestamps
        .iter()
        .zip(&curve.positions)
        .zip(&curve.pnl)
    {
        out.push_str(&format!(
            "{},{},{}\n",
            ts.format(TIMESTAMP_FORMAT),
            pos,
            pnl
        ));
    }
    out
}

/// Long-format `symbol,window,metric,value` rows; undefined metrics are
/// omitted.
pub fn metrics_tidy_csv(windows: &[WindowMetrics]) -> String {
    let mut out = String::from("symbol,window,metric,value\n");
    for w in windows {
        let fields = [
            ("mean_daily_return", Some(w.mean_daily_return)),
            ("sharpe", w.sharpe),
            ("capability", w.capability),
            ("max_drawdown", Some(w.max_drawdown)),
            ("final_pnl", Some(w.final_pnl)),
            ("benchmark_correlation", w.benchmark_correlation),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                out.push_str(&format!("{},{},{},{}\n", w.symbol, w.window, name, v));
            }
        }
    }
    out
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Reads `symbol,initial_margin,maintenance_margin,contract_size`.
pub fn read_contracts(path: &Path) -> Result<Vec<ContractSpec>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let spec: ContractSpec = rec.map_err(|e| csv_error(path, e))?;
        spec.validate()?;
        out.push(spec);
    }
    Ok(out)
}

pub fn contracts_csv(specs: &[ContractSpec]) -> String {
    let mut out = String::from("symbol,initial_margin,maintenance_margin,contract_size\n");
    for s in specs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.symbol, s.initial_margin, s.maintenance_margin, s.contract_size
        ));
    }
    out
}

#[derive(Deserialize)]
struct BenchmarkRow {
    date: NaiveDate,
    #[serde(rename = "return")]
    ret: f64,
}

/// Reads `date,return` with ISO dates.
pub fn read_benchmark(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize::<BenchmarkRow>()
        .map(|r| r.map(|b| (b.date, b.ret)).map_err(|e| csv_error(path, e)))
        .collect()
}
