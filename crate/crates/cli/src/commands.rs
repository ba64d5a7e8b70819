use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use dfx_core::dataset::io::{load_frame, save_frame};
use dfx_core::dataset::{build_features, gen_synthetic, ingest_csv, normalize, FeatureFrame};
use dfx_core::network::Topology;
use dfx_core::strategy::{
    self, contracts_csv, equity_csv, metrics_tidy_csv, perfect_foresight_labels, read_benchmark,
    read_contracts, simulate, window_metrics, ContractSpec, WindowMetrics,
};
use dfx_core::trainer::sweep_gamma_with;
use dfx_core::walkforward::{
    aggregate, make_plan, run_walkforward, windows_csv, Summary, WindowResult,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, RunConfig};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Synthetic margins: the initial margin is 10% above maintenance.
const SYNTH_MAINTENANCE_MARGIN: f64 = 2000.0;

pub fn synth(cfg: &RunConfig) -> Result<String, CliError> {
    let pt = gen_synthetic(&cfg.synth.spec, cfg.run.seed)?;
    let out = cfg.out_dir();
    write(&out.join("prices.csv"), pt.to_csv_string())?;
    let specs: Vec<ContractSpec> = pt
        .symbols()
        .iter()
        .map(|s| ContractSpec {
            symbol: s.clone(),
            initial_margin: SYNTH_MAINTENANCE_MARGIN * 1.1,
            maintenance_margin: SYNTH_MAINTENANCE_MARGIN,
            contract_size: cfg.synth.contract_size,
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    write(&out.join("contracts.csv"), contracts_csv(&specs))?;
    Ok(format!(
        "wrote {} rows x {} symbols to {}\n",
        pt.n_rows(),
        pt.n_symbols(),
        out.join("prices.csv").display()
    ))
}

pub fn features(cfg: &RunConfig) -> Result<String, CliError> {
    let prices = cfg.prices_path();
    cfg.check_inputs(std::slice::from_ref(&prices))?;
    let pt = ingest_csv(&prices, Duration::minutes(cfg.data.interval_minutes))?;
    let frame = build_features(&pt, &cfg.features.feature_config())?;
    save_frame(&cfg.features_dir(), &frame)?;
    Ok(format!(
        "rows {}\ncolumns {}\nwarm-up rows dropped {}\n",
        frame.n_rows(),
        frame.n_features(),
        frame.warmup_rows
    ))
}

fn load_features(cfg: &RunConfig) -> Result<FeatureFrame, CliError> {
    let dir = cfg.features_dir();
    if !dir.join("features.dfx").is_file() {
        return Err(CliError::input(format!(
            "no feature frame in {}; run `dfx features` first",
            dir.display()
        )));
    }
    Ok(load_frame(&dir)?)
}

fn gamma_tag(g: f64) -> String {
    format!("gamma_{g}")
}

pub fn train(cfg: &RunConfig) -> Result<String, CliError> {
    let frame = load_features(cfg)?;
    let p = cfg.plan();
    let plan = make_plan(frame.n_rows(), p.train_len, p.test_len, p.step, p.n_windows)?;
    let (train, test) = (plan.train_range(0), plan.test_range(0));
    let mut f = normalize(&frame, train.clone())?;
    f.relabel(cfg.features.threshold, train.clone())?;
    let topo = Topology::with_hidden(f.n_features(), &cfg.network.hidden, f.n_symbols())?;

    let dir = cfg.out_dir().join("train");
    let cand_dir = dir.join("candidates");
    fs::create_dir_all(&cand_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", cand_dir.display())))?;
    let report = sweep_gamma_with(&f, train, test, &topo, &cfg.train_config(), |g, params| {
        params.save(&cand_dir.join(format!("{}.dfn", gamma_tag(g))))
    })?;
    let best = report
        .best_params
        .as_ref()
        .expect("sweep keeps the chosen network");
    best.save(&dir.join("chosen.dfn"))?;
    write(&dir.join("report.json"), report.to_json() + "\n")?;

    let mut out = String::new();
    for c in &report.candidates {
        match (&c.holdout_rate, &c.error) {
            (Some(r), _) => writeln!(
                out,
                "gamma {:<4} hold-out accuracy {:.4} halvings {}",
                c.gamma,
                r.mean,
                c.halving_events.len()
            ),
            (None, e) => writeln!(
                out,
                "gamma {:<4} failed: {}",
                c.gamma,
                e.as_deref().unwrap_or("")
            ),
        }
        .expect("write to string");
    }
    let chosen = report
        .chosen()
        .holdout_rate
        .as_ref()
        .expect("chosen candidate has a rate");
    writeln!(
        out,
        "chosen gamma {} (accuracy {:.4})",
        report.chosen_gamma, chosen.mean
    )
    .expect("write to string");
    Ok(out)
}

/// Everything `report` reads back from a finished backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestMetrics {
    pub symbols: Vec<String>,
    pub accuracy: Summary,
    pub predicted: Vec<WindowMetrics>,
    pub perfect_foresight: Vec<WindowMetrics>,
    pub predicted_summary: Vec<strategy::SymbolMetrics>,
    pub perfect_foresight_summary: Vec<strategy::SymbolMetrics>,
}

pub fn backtest_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("backtest")
}

pub fn backtest(cfg: &RunConfig) -> Result<String, CliError> {
    let frame = load_features(cfg)?;
    let contracts_path = cfg.contracts_path();
    let mut inputs = vec![contracts_path.clone()];
    inputs.extend(cfg.data.benchmarks.values().cloned());
    cfg.check_inputs(&inputs)?;
    let contracts: BTreeMap<String, ContractSpec> = read_contracts(&contracts_path)?
        .into_iter()
        .map(|c| (c.symbol.clone(), c))
        .collect();
    for s in &frame.symbols {
        if !contracts.contains_key(s) {
            return Err(CliError::input(format!(
                "{}: no contract spec for symbol {s}",
                contracts_path.display()
            )));
        }
    }
    let mut benchmarks = BTreeMap::new();
    for (sym, path) in &cfg.data.benchmarks {
        benchmarks.insert(sym.clone(), read_benchmark(path)?);
    }

    let p = cfg.plan();
    let plan = make_plan(frame.n_rows(), p.train_len, p.test_len, p.step, p.n_windows)?;
    let dir = backtest_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let log = dir.join("windows.jsonl");
    for sub in ["checkpoints", "train_reports"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| CliError::input(format!("{}: {e}", d.display())))?;
    }
    let results = run_walkforward(
        &frame,
        &plan,
        &cfg.window_config(),
        Some(&log),
        |r, report| {
            let best = report
                .best_params
                .as_ref()
                .expect("sweep keeps the chosen network");
            best.save(
                &dir.join("checkpoints")
                    .join(format!("window_{}.dfn", r.window)),
            )?;
            let path = dir
                .join("train_reports")
                .join(format!("window_{}.json", r.window));
            fs::write(&path, report.to_json() + "\n")
                .map_err(|source| dfx_core::Error::Io { path, source })?;
            eprintln!(
                "window {}: gamma {} mean accuracy {:.4}",
                r.window,
                r.chosen_gamma,
                r.accuracy.iter().sum::<f64>() / r.accuracy.len() as f64
            );
            Ok(())
        },
    )?;
    write(
        &dir.join("windows.csv"),
        windows_csv(&results, &frame.symbols),
    )?;

    let mut predicted = Vec::new();
    let mut perfect = Vec::new();
    for r in &results {
        for (s, sym) in frame.symbols.iter().enumerate() {
            let (ts, prices) = test_prices(&frame, r, s, cfg.data.interval_minutes);
            let spec = &contracts[sym];
            let bench = benchmarks.get(sym).map(|b| b.as_slice());
            let labels = r.predictions.column(s);
            let curve = simulate(&ts, &prices, &labels, spec, cfg.strategy.zero_label)?;
            let pf_labels = perfect_foresight_labels(&prices);
            let pf = simulate(&ts, &prices, &pf_labels, spec, cfg.strategy.zero_label)?;
            let eq = dir.join("equity");
            write(
                &eq.join(format!("{sym}_w{}_predicted.csv", r.window)),
                equity_csv(&curve),
            )?;
            write(
                &eq.join(format!("{sym}_w{}_perfect.csv", r.window)),
                equity_csv(&pf),
            )?;
            predicted.push(window_metrics(
                sym,
                r.window,
                &curve,
                cfg.strategy.initial_cash,
                bench,
            )?);
            perfect.push(window_metrics(
                sym,
                r.window,
                &pf,
                cfg.strategy.initial_cash,
                bench,
            )?);
        }
    }

    let accuracy = aggregate(&results, &frame.symbols)?;
    let metrics = BacktestMetrics {
        symbols: frame.symbols.clone(),
        predicted_summary: strategy::summarize(&predicted),
        perfect_foresight_summary: strategy::summarize(&perfect),
        accuracy,
        predicted,
        perfect_foresight: perfect,
    };
    write(&dir.join("metrics.json"), to_json(&metrics))?;
    write(
        &dir.join("plots").join("accuracy.csv"),
        accuracy_tidy_csv(&results, &frame.symbols),
    )?;
    write(
        &dir.join("plots").join("strategy_predicted.csv"),
        metrics_tidy_csv(&metrics.predicted),
    )?;
    write(
        &dir.join("plots").join("strategy_perfect.csv"),
        metrics_tidy_csv(&metrics.perfect_foresight),
    )?;

    let mut progress = String::new();
    writeln!(
        progress,
        "{} windows, mean accuracy {:.4} (std across symbols {:.4})",
        results.len(),
        metrics.accuracy.accuracy_mean,
        metrics.accuracy.accuracy_std
    )
    .expect("write to string");
    writeln!(progress, "outputs in {}", dir.display()).expect("write to string");
    Ok(progress)
}

/// Timestamps and prices for a window's test rows plus the price one
/// interval after the last row, so every label has a next price.
fn test_prices(
    frame: &FeatureFrame,
    r: &WindowResult,
    s: usize,
    interval: i64,
) -> (Vec<NaiveDateTime>, Vec<f64>) {
    let range = r.test_range.clone();
    let mut ts = frame.timestamps[range.clone()].to_vec();
    let mut prices: Vec<f64> = range.clone().map(|t| frame.prices.get(t, s)).collect();
    let last = range.end - 1;
    ts.push(frame.timestamps[last] + Duration::minutes(interval));
    prices.push(frame.prices.get(last, s) + frame.next_diffs.get(last, s));
    (ts, prices)
}

/// `symbol,window,metric,value` with accuracy and F1 per window.
pub fn accuracy_tidy_csv(results: &[WindowResult], symbols: &[String]) -> String {
    let mut out = String::from("symbol,window,metric,value\n");
    for r in results {
        for (s, sym) in symbols.iter().enumerate() {
            writeln!(out, "{sym},{},accuracy,{}", r.window, r.accuracy[s])
                .expect("write to string");
            writeln!(out, "{sym},{},f1,{}", r.window, r.f1[s]).expect("write to string");
        }
    }
    out
}
