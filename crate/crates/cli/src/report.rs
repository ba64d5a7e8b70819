use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dfx_core::strategy::{Spread, SymbolMetrics};
use dfx_core::walkforward::{aggregate, read_window_log, Summary};

use crate::commands::{backtest_dir, BacktestMetrics};
use crate::{CliError, RunConfig};

/// Rows shown in each table.
pub const TOP_N: usize = 5;

fn missing(path: &Path) -> CliError {
    CliError::input(format!(
        "{} not found; run `dfx backtest` first",
        path.display()
    ))
}

fn cmp_desc(a: f64, b: f64) -> std::cmp::Ordering {
    b.total_cmp(&a)
}

/// Per-symbol accuracy and F1 rows, best mean accuracy first, then the
/// cross-symbol mean and std over all symbols.
pub fn accuracy_table(summary: &Summary) -> Vec<[String; 5]> {
    let mut rows: Vec<_> = summary.per_symbol.iter().collect();
    rows.sort_by(|a, b| {
        cmp_desc(a.accuracy.mean, b.accuracy.mean).then_with(|| a.symbol.cmp(&b.symbol))
    });
    let mut out: Vec<[String; 5]> = rows
        .into_iter()
        .take(TOP_N)
        .map(|s| {
            [
                s.symbol.clone(),
                s.accuracy.mean.to_string(),
                s.accuracy.std.to_string(),
                s.f1.mean.to_string(),
                s.f1.std.to_string(),
            ]
        })
        .collect();
    out.push([
        "ALL".into(),
        summary.accuracy_mean.to_string(),
        summary.accuracy_std.to_string(),
        summary.f1_mean.to_string(),
        summary.f1_std.to_string(),
    ]);
    out
}

fn spread_cols(s: Option<&Spread>) -> [String; 2] {
    match s {
        Some(s) => [s.mean.to_string(), s.std.to_string()],
        None => [String::new(), String::new()],
    }
}

/// Best mean Sharpe first; symbols without a defined Sharpe sort last.
pub fn sharpe_table(metrics: &[SymbolMetrics]) -> Vec<[String; 5]> {
    let mut rows: Vec<_> = metrics.iter().collect();
    let key = |m: &SymbolMetrics| m.sharpe.map_or(f64::NEG_INFINITY, |s| s.mean);
    rows.sort_by(|a, b| cmp_desc(key(a), key(b)).then_with(|| a.symbol.cmp(&b.symbol)));
    rows.into_iter()
        .take(TOP_N)
        .map(|m| {
            let [sm, ss] = spread_cols(m.sharpe.as_ref());
            let [cm, cs] = spread_cols(m.capability.as_ref());
            [m.symbol.clone(), sm, ss, cm, cs]
        })
        .collect()
}

pub fn correlation_table(metrics: &[SymbolMetrics]) -> Vec<[String; 5]> {
    metrics
        .iter()
        .filter_map(|m| {
            m.benchmark_correlation.map(|c| {
                [
                    m.symbol.clone(),
                    c.mean.to_string(),
                    c.std.to_string(),
                    c.max.to_string(),
                    c.min.to_string(),
                ]
            })
        })
        .collect()
}

fn csv(header: &[&str; 5], rows: &[[String; 5]]) -> String {
    let mut out = header.join(",") + "\n";
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn short(v: &str) -> String {
    v.parse::<f64>()
        .map_or_else(|_| v.to_string(), |x| format!("{x:.3}"))
}

/// Markdown table with "mean (std)" cells.
fn markdown(title: &str, heads: [&str; 3], rows: &[[String; 5]], paired: bool) -> String {
    let mut out = format!("### {title}\n\n");
    if paired {
        writeln!(
            out,
            "| {} | {} | {} |\n|---|---|---|",
            heads[0], heads[1], heads[2]
        )
        .expect("write to string");
        for r in rows {
            let cell = |m: &str, s: &str| {
                if m.is_empty() {
                    "n/a".to_string()
                } else {
                    format!("{} ({})", short(m), short(s))
                }
            };
            writeln!(
                out,
                "| {} | {} | {} |",
                r[0],
                cell(&r[1], &r[2]),
                cell(&r[3], &r[4])
            )
            .expect("write to string");
        }
    } else {
        out.push_str("| symbol | mean | std | max | min |\n|---|---|---|---|---|\n");
        for r in rows {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                r[0],
                short(&r[1]),
                short(&r[2]),
                short(&r[3]),
                short(&r[4])
            )
            .expect("write to string");
        }
    }
    out.push('\n');
    out
}

pub fn report(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = backtest_dir(cfg);
    let log = dir.join("windows.jsonl");
    let metrics_path = dir.join("metrics.json");
    for p in [&log, &metrics_path] {
        if !p.is_file() {
            return Err(missing(p));
        }
    }
    let text = fs::read_to_string(&metrics_path)
        .map_err(|e| CliError::input(format!("{}: {e}", metrics_path.display())))?;
    let metrics: BacktestMetrics = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", metrics_path.display())))?;
    let results = read_window_log(&log)?;
    let summary = aggregate(&results, &metrics.symbols)?;

    let t1 = accuracy_table(&summary);
    let t2 = sharpe_table(&metrics.predicted_summary);
    let t4 = correlation_table(&metrics.predicted_summary);

    let out = dir.join("report");
    let write = |name: &str, body: String| {
        let p = out.join(name);
        fs::create_dir_all(&out)
            .and_then(|_| fs::write(&p, body))
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))
    };
    write(
        "table1.csv",
        csv(
            &[
                "symbol",
                "accuracy_mean",
                "accuracy_std",
                "f1_mean",
                "f1_std",
            ],
            &t1,
        ),
    )?;
    write(
        "table2.csv",
        csv(
            &[
                "symbol",
                "sharpe_mean",
                "sharpe_std",
                "capability_mean",
                "capability_std",
            ],
            &t2,
        ),
    )?;
    if !t4.is_empty() {
        write(
            "table4.csv",
            csv(
                &[
                    "symbol",
                    "correlation_mean",
                    "correlation_std",
                    "correlation_max",
                    "correlation_min",
                ],
                &t4,
            ),
        )?;
    }

    let mut md = format!(
        "{} windows, {} symbols\n\n",
        summary.windows,
        metrics.symbols.len()
    );
    md += &markdown(
        "Classification accuracy (top five)",
        ["symbol", "accuracy", "F1"],
        &t1,
        true,
    );
    md += &markdown(
        "Annualized Sharpe ratio (top five)",
        ["symbol", "Sharpe", "capability"],
        &t2,
        true,
    );
    if !t4.is_empty() {
        md += &markdown(
            "Correlation of daily returns with benchmark",
            ["", "", ""],
            &t4,
            false,
        );
    }
    write("tables.md", md.clone())?;
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfx_core::walkforward::{Stats, SymbolSummary};

    fn sym(name: &str, acc: f64) -> SymbolSummary {
        SymbolSummary {
            symbol: name.into(),
            accuracy: Stats::of(&[acc]),
            f1: Stats::of(&[acc / 2.0]),
        }
    }

    #[test]
    fn accuracy_table_sorts_and_truncates() {
        let s = Summary {
            windows: 1,
            per_symbol: ["A", "B", "C", "D", "E", "F", "G"]
                .iter()
                .zip([0.3, 0.9, 0.5, 0.7, 0.1, 0.8, 0.6])
                .map(|(n, a)| sym(n, a))
                .collect(),
            accuracy_mean: 0.55,
            accuracy_std: 0.1,
            f1_mean: 0.2,
            f1_std: 0.05,
        };
        let t = accuracy_table(&s);
        let names: Vec<_> = t.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(names, ["B", "F", "D", "G", "C", "ALL"]);
    }

    #[test]
    fn sharpe_table_puts_undefined_last() {
        let m = |n: &str, s: Option<f64>| SymbolMetrics {
            symbol: n.into(),
            mean_daily_return: None,
            sharpe: s.and_then(|v| Spread::of([v])),
            capability: None,
            max_drawdown: None,
            benchmark_correlation: None,
        };
        let t = sharpe_table(&[m("A", None), m("B", Some(1.0)), m("C", Some(2.0))]);
        let names: Vec<_> = t.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(names, ["C", "B", "A"]);
        assert_eq!(t[2][1], "");
    }
}
