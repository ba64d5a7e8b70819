use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
[synth]
kind = "lag_rule"
lags = [1, 2]
n_rows = 1400
n_symbols = 2

[network]
hidden = [12]

[train]
gamma_grid = [0.4, 0.8]
epochs = 3
minibatch = 64

[walkforward]
train_len = 600
test_len = 300
step = 150
n_windows = 3

[run]
seed = 3
"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn dfx(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dfx"))
            .args(args)
            .arg("--config")
            .arg(self.path("run.toml"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.dfx(args);
        assert!(
            out.status.success(),
            "dfx {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == name)
        .unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

#[test]
fn missing_prices_file_exits_2_naming_it() {
    let run = Run::new("[data]\nprices = \"nowhere.csv\"\n");
    let out = run.dfx(&["features"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn bad_config_exits_2_before_any_work() {
    let run = Run::new("[train]\nminibatch = 0\n");
    let out = run.dfx(&["synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!run.path("out").exists());

    let run = Run::new("[network]\nhiddn = [3]\n");
    assert_eq!(run.dfx(&["synth"]).status.code(), Some(2));
}

#[test]
fn later_stages_name_the_missing_stage() {
    let run = Run::new(BASE);
    let out = run.dfx(&["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dfx features"));
    let out = run.dfx(&["report"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dfx backtest"));
}

#[test]
fn features_for_two_symbols_have_396_columns_and_are_reproducible() {
    let run = Run::new(BASE);
    run.ok(&["synth"]);
    let printed = run.ok(&["features"]);
    assert!(printed.contains("columns 396"), "{printed}");
    let first = fs::read(run.path("out/features/features.dfx")).unwrap();
    run.ok(&["features"]);
    assert_eq!(
        fs::read(run.path("out/features/features.dfx")).unwrap(),
        first
    );
    let desc = run.read("out/features/features.desc");
    assert_eq!(desc.lines().filter(|l| !l.is_empty()).count(), 396);
}

#[test]
fn train_override_collapses_grid_and_is_deterministic() {
    let run = Run::new(BASE);
    run.ok(&["synth"]);
    run.ok(&["features"]);
    run.ok(&["train", "--gamma", "0.5"]);
    let report: serde_json::Value =
        serde_json::from_str(&run.read("out/train/report.json")).unwrap();
    assert_eq!(report["candidates"].as_array().unwrap().len(), 1);
    assert_eq!(report["chosen_gamma"], 0.5);
    assert!(run.path("out/train/candidates/gamma_0.5.dfn").is_file());

    let first = fs::read(run.path("out/train/chosen.dfn")).unwrap();
    run.ok(&["train", "--gamma", "0.5"]);
    assert_eq!(fs::read(run.path("out/train/chosen.dfn")).unwrap(), first);
}

#[test]
fn train_reports_best_holdout_on_lag_rule() {
    let run = Run::new(BASE);
    run.ok(&["synth"]);
    run.ok(&["features"]);
    let printed = run.ok(&["train"]);
    assert!(printed.contains("chosen gamma"));
    let report: serde_json::Value =
        serde_json::from_str(&run.read("out/train/report.json")).unwrap();
    let best = report["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["holdout_rate"]["mean"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(best >= 0.9, "best hold-out accuracy {best}");
    assert_eq!(
        report["candidates"][0]["loss_trace"]
            .as_array()
            .unwrap()
            .len(),
        4
    );
}

fn backtested(config: &str) -> Run {
    let run = Run::new(config);
    run.ok(&["synth"]);
    run.ok(&["features"]);
    run.ok(&["backtest"]);
    run
}

#[test]
fn backtest_emits_one_record_per_window_and_dominated_curves() {
    let run = backtested(BASE);
    let log = run.read("out/backtest/windows.jsonl");
    assert_eq!(log.lines().count(), 3);
    let equity: Vec<_> = fs::read_dir(run.path("out/backtest/equity"))
        .unwrap()
        .collect();
    assert_eq!(equity.len(), 2 * 3 * 2);
    for w in 0..3 {
        assert!(run
            .path(&format!("out/backtest/checkpoints/window_{w}.dfn"))
            .is_file());
        for sym in ["SYN0", "SYN1"] {
            let pred = csv_column(
                &run.read(&format!("out/backtest/equity/{sym}_w{w}_predicted.csv")),
                "pnl",
            );
            let pf = csv_column(
                &run.read(&format!("out/backtest/equity/{sym}_w{w}_perfect.csv")),
                "pnl",
            );
            assert_eq!(pred.len(), 301);
            for (p, f) in pred.iter().zip(&pf) {
                let (p, f): (f64, f64) = (p.parse().unwrap(), f.parse().unwrap());
                assert!(f >= p, "{sym} window {w}: perfect {f} < predicted {p}");
            }
        }
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&run.read("out/backtest/metrics.json")).unwrap();
    assert_eq!(metrics["predicted"].as_array().unwrap().len(), 6);
}

#[test]
fn interrupted_backtest_resumes_to_identical_outputs() {
    let run = backtested(BASE);
    let log_path = run.path("out/backtest/windows.jsonl");
    let full = fs::read(&log_path).unwrap();
    let metrics = fs::read(run.path("out/backtest/metrics.json")).unwrap();
    let text = String::from_utf8(full.clone()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.pop().unwrap();
    // Keep the first two windows plus a torn third line.
    let torn = format!("{}\n{}", lines.join("\n"), &last[..last.len() / 2]);
    fs::write(&log_path, torn).unwrap();
    run.ok(&["backtest"]);
    assert_eq!(fs::read(&log_path).unwrap(), full);
    assert_eq!(
        fs::read(run.path("out/backtest/metrics.json")).unwrap(),
        metrics
    );
}

/// Mean and n-1 std, written independently of the library.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

#[test]
fn report_tables_are_sorted_and_recomputable() {
    let config = BASE.replace("n_symbols = 2", "n_symbols = 3").replace(
        "kind = \"lag_rule\"\nlags = [1, 2]",
        "kind = \"random_walk\"",
    );
    let run = backtested(&config);
    let md = run.ok(&["report"]);
    assert!(md.contains("Classification accuracy"));

    let windows = run.read("out/backtest/windows.csv");
    let syms = csv_column(&windows, "symbol");
    let acc: Vec<f64> = csv_column(&windows, "accuracy")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    let f1: Vec<f64> = csv_column(&windows, "f1")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();

    let table = run.read("out/backtest/report/table1.csv");
    let rows: Vec<Vec<&str>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3 + 1);
    let means: Vec<f64> = rows[..3].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]), "{means:?}");

    let mut per_symbol_means = Vec::new();
    for r in &rows[..3] {
        let pick = |v: &[f64]| -> Vec<f64> {
            syms.iter()
                .zip(v)
                .filter(|(s, _)| s.as_str() == r[0])
                .map(|(_, &x)| x)
                .collect()
        };
        let (am, asd) = mean_std(&pick(&acc));
        let (fm, fsd) = mean_std(&pick(&f1));
        for (got, want) in r[1..].iter().zip([am, asd, fm, fsd]) {
            assert!((got.parse::<f64>().unwrap() - want).abs() <= 1e-12, "{r:?}");
        }
        per_symbol_means.push(am);
    }
    let all = &rows[3];
    assert_eq!(all[0], "ALL");
    let (m, s) = mean_std(&per_symbol_means);
    assert!((all[1].parse::<f64>().unwrap() - m).abs() <= 1e-12);
    assert!((all[2].parse::<f64>().unwrap() - s).abs() <= 1e-12);

    let t2 = run.read("out/backtest/report/table2.csv");
    assert_eq!(t2.lines().count(), 1 + 3);
    assert!(!run.path("out/backtest/report/table4.csv").exists());
}

#[test]
fn one_symbol_report_degrades_to_one_row() {
    let config = BASE.replace("n_symbols = 2", "n_symbols = 1");
    let run = backtested(&config);
    run.ok(&["report"]);
    let t1 = run.read("out/backtest/report/table1.csv");
    assert_eq!(t1.lines().count(), 1 + 1 + 1);
    let t2 = run.read("out/backtest/report/table2.csv");
    assert_eq!(t2.lines().count(), 1 + 1);
}

fn write_benchmark(dir: &Path, prices_csv: &str) -> PathBuf {
    // A benchmark return on every date in the price file.
    let mut dates: Vec<&str> = prices_csv.lines().skip(1).map(|l| &l[..10]).collect();
    dates.dedup();
    let mut out = String::from("date,return\n");
    for (i, d) in dates.iter().enumerate() {
        out.push_str(&format!("{d},{}\n", ((i * 7919) % 13) as f64 * 1e-3 - 6e-3));
    }
    let p = dir.join("bench.csv");
    fs::write(&p, out).unwrap();
    p
}

#[test]
fn benchmarks_produce_correlation_table() {
    let run = Run::new(BASE);
    run.ok(&["synth"]);
    let bench = write_benchmark(run.dir.path(), &run.read("out/prices.csv"));
    let config = format!(
        "[data]\nbenchmarks = {{ SYN0 = \"{}\" }}\n{BASE}",
        bench.display()
    );
    fs::write(run.path("run.toml"), config).unwrap();
    run.ok(&["features"]);
    run.ok(&["backtest"]);
    let md = run.ok(&["report"]);
    assert!(md.contains("benchmark"), "{md}");
    let t4 = run.read("out/backtest/report/table4.csv");
    assert_eq!(t4.lines().count(), 2);
    assert!(t4.lines().nth(1).unwrap().starts_with("SYN0,"));
}

#[test]
fn missing_contract_file_exits_2() {
    let run = Run::new(BASE);
    run.ok(&["synth"]);
    run.ok(&["features"]);
    fs::remove_file(run.path("out/contracts.csv")).unwrap();
    let out = run.dfx(&["backtest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("contracts.csv"));
}
