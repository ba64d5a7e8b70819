//! Rolling train/test windows, one learning-rate sweep per window, and
//! accuracy/F1 summaries across windows.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureFrame;
use crate::dataset::{normalize, LabelMatrix, Threshold};
use crate::error::{Error, Result};
use crate::network::{predict_labels, NetworkParams, Topology};
use crate::trainer::{classification_rate, sweep_gamma_with, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkForwardPlan {
    pub train_len: usize,
    pub test_len: usize,
    pub step: usize,
    pub n_windows: usize,
}

impl Default for WalkForwardPlan {
    fn default() -> Self {
        Self {
            train_len: 25_000,
            test_len: 12_500,
            step: 1_000,
            n_windows: 10,
        }
    }
}

impl WalkForwardPlan {
    pub fn required_rows(&self) -> usize {
        (self.n_windows - 1) * self.step + self.train_len + self.test_len
    }

    pub fn train_range(&self, i: usize) -> Range<usize> {
        let start = i * self.step;
        start..start + self.train_len
    }

    pub fn test_range(&self, i: usize) -> Range<usize> {
        let start = i * self.step + self.train_len;
        start..start + self.test_len
    }
}

pub fn make_plan(
    n_rows: usize,
    train_len: usize,
    test_len: usize,
    step: usize,
    n_windows: usize,
) -> Result<WalkForwardPlan> {
    if train_len == 0 || test_len == 0 || n_windows == 0 || (n_windows > 1 && step == 0) {
        return Err(Error::invalid(
            "train and test lengths, window count and step must be positive",
        ));
    }
    let plan = WalkForwardPlan {
        train_len,
        test_len,
        step,
        n_windows,
    };
    let required = plan.required_rows();
    if n_rows < required {
        return Err(Error::InsufficientRows {
            required,
            available: n_rows,
        });
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Macro,
    Micro,
}

/// Everything a window needs besides the frame and the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub hidden: Vec<usize>,
    pub threshold: Threshold,
    pub train: TrainConfig,
    pub f1: F1Average,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            hidden: crate::network::DEFAULT_HIDDEN.to_vec(),
            threshold: Threshold::default(),
            train: TrainConfig::default(),
            f1: F1Average::Macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: usize,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
    /// Label dead-zone width fitted on the training range.
    pub threshold: f64,
    pub chosen_gamma: f64,
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub predictions: LabelMatrix,
    pub truth: LabelMatrix,
}

/// Macro or micro F1 of one symbol's predictions over the classes -1, 0, +1.
/// Macro is the plain mean of the three per-class scores, so a class absent
/// from both predictions and truth contributes 0.
pub fn f1_score(
    pred: &LabelMatrix,
    truth: &LabelMatrix,
    symbol: usize,
    average: F1Average,
) -> Result<f64> {
    if pred.rows() != truth.rows() || pred.n_symbols() != truth.n_symbols() {
        return Err(Error::Shape {
            op: "f1_score",
            left: (pred.rows(), pred.n_symbols()),
            right: (truth.rows(), truth.n_symbols()),
        });
    }
    if pred.rows() == 0 {
        return Err(Error::invalid("F1 of an empty label set"));
    }
    if symbol >= pred.n_symbols() {
        return Err(Error::invalid(format!("symbol {symbol} out of range")));
    }
    let (p, t) = (pred.column(symbol), truth.column(symbol));
    if average == F1Average::Micro {
        // Every row contributes one prediction and one truth, so micro
        // precision, recall and F1 all equal accuracy.
        let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
        return Ok(hits as f64 / p.len() as f64);
    }
    let mut total = 0.0;
    for class in [-1i8, 0, 1] {
        let tp = p
            .iter()
            .zip(&t)
            .filter(|&(&a, &b)| a == class && b == class)
            .count() as f64;
        let predicted = p.iter().filter(|&&a| a == class).count() as f64;
        let actual = t.iter().filter(|&&b| b == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(total / 3.0)
}

/// Refits normalization and labels on window `i`'s training rows, sweeps
/// the learning rate with the test rows as hold-out, and scores the chosen
/// network on the test rows. The sweep report is returned alongside, with
/// the chosen parameters in `best_params`.
pub fn run_window_with<F>(
    frame: &FeatureFrame,
    plan: &WalkForwardPlan,
    i: usize,
    cfg: &WindowConfig,
    on_candidate: F,
) -> Result<(WindowResult, TrainReport)>
where
    F: Fn(f64, &NetworkParams) -> Result<()> + Sync,
{
    if i >= plan.n_windows {
        return Err(Error::invalid(format!(
            "window {i} out of range for a {}-window plan",
            plan.n_windows
        )));
    }
    if frame.n_rows() < plan.required_rows() {
        return Err(Error::InsufficientRows {
            required: plan.required_rows(),
            available: frame.n_rows(),
        });
    }
    let (train, test) = (plan.train_range(i), plan.test_range(i));
    let mut f = normalize(frame, train.clone())?;
    let threshold = f.relabel(cfg.threshold, train.clone())?;
    let topo = Topology::with_hidden(f.n_features(), &cfg.hidden, f.n_symbols())?;
    let report = sweep_gamma_with(
        &f,
        train.clone(),
        test.clone(),
        &topo,
        &cfg.train,
        on_candidate,
    )?;
    let params = report
        .best_params
        .as_ref()
        .expect("sweep keeps the chosen network");

    let predictions = predict_labels(params, &f.x.slice_rows(test.clone())?)?;
    let truth = f.labels()?.slice_rows(test.clone())?;
    let accuracy = classification_rate(&predictions, &truth)?.per_symbol;
    let f1 = (0..f.n_symbols())
        .map(|s| f1_score(&predictions, &truth, s, cfg.f1))
        .collect::<Result<_>>()?;
    Ok((
        WindowResult {
            window: i,
            train_range: train,
            test_range: test,
            threshold,
            chosen_gamma: report.chosen_gamma,
            accuracy,
            f1,
            predictions,
            truth,
        },
        report,
    ))
}

pub fn run_window(
    frame: &FeatureFrame,
    plan: &WalkForwardPlan,
    i: usize,
    cfg: &WindowConfig,
) -> Result<WindowResult> {
    run_window_with(frame, plan, i, cfg, |_, _| Ok(())).map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "statistics of an empty set");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            std,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Linear interpolation between closest ranks of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSummary {
    pub symbol: String,
    pub accuracy: Stats,
    pub f1: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub windows: usize,
    pub per_symbol: Vec<SymbolSummary>,
    /// Mean and std across symbols of the per-symbol mean accuracy.
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

pub fn aggregate(results: &[WindowResult], symbols: &[String]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::invalid("no window results to aggregate"));
    }
    if results
        .iter()
        .any(|r| r.accuracy.len() != symbols.len() || r.f1.len() != symbols.len())
    {
        return Err(Error::invalid(
            "window results do not match the symbol list",
        ));
    }
    let mut ordered: Vec<&WindowResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.window);
    let per_symbol: Vec<SymbolSummary> = symbols
        .iter()
        .enumerate()
        .map(|(s, name)| SymbolSummary {
            symbol: name.clone(),
            accuracy: Stats::of(&ordered.iter().map(|r| r.accuracy[s]).collect::<Vec<_>>()),
            f1: Stats::of(&ordered.iter().map(|r| r.f1[s]).collect::<Vec<_>>()),
        })
        .collect();
    let acc = Stats::of(
        &per_symbol
            .iter()
            .map(|p| p.accuracy.mean)
            .collect::<Vec<_>>(),
    );
    let f1 = Stats::of(&per_symbol.iter().map(|p| p.f1.mean).collect::<Vec<_>>());
    Ok(Summary {
        windows: results.len(),
        per_symbol,
        accuracy_mean: acc.mean,
        accuracy_std: acc.std,
        f1_mean: f1.mean,
        f1_std: f1.std,
    })
}

/// Window results already present in a JSON-lines log. A missing file is
/// an empty log; a torn final line from an interrupted write is ignored.
pub fn read_window_log(path: &Path) -> Result<Vec<WindowResult>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Rewrites the log to hold exactly `results`, so a torn tail is dropped
/// before new windows are appended.
pub fn write_window_log(path: &Path, results: &[WindowResult]) -> Result<()> {
    let mut text = String::new();
    for r in results {
        text.push_str(&serde_json::to_string(r).expect("window result serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn append_window_log(path: &Path, result: &WindowResult) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(result).expect("window result serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// `symbol,window,accuracy,f1,chosen_gamma` rows, ordered by window then
/// symbol.
pub fn windows_csv(results: &[WindowResult], symbols: &[String]) -> String {
    let mut ordered: Vec<&WindowResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.window);
    let mut out = String::from("symbol,window,accuracy,f1,chosen_gamma\n");
    for r in ordered {
        for (s, name) in symbols.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                name, r.window, r.accuracy[s], r.f1[s], r.chosen_gamma
            ));
        }
    }
    out
}

/// Runs every window not already recorded in `log`, appending each result
/// as it completes. `on_window` sees each newly trained window and its sweep
/// report.
pub fn run_walkforward<F>(
    frame: &FeatureFrame,
    plan: &WalkForwardPlan,
    cfg: &WindowConfig,
    log: Option<&Path>,
    mut on_window: F,
) -> Result<Vec<WindowResult>>
where
    F: FnMut(&WindowResult, &TrainReport) -> Result<()>,
{
    let mut results = match log {
        Some(path) => {
            let done = read_window_log(path)?;
            write_window_log(path, &done)?;
            done
        }
        None => Vec::new(),
    };
    for i in 0..plan.n_windows {
        if results.iter().any(|r| r.window == i) {
            continue;
        }
        let (r, report) = run_window_with(frame, plan, i, cfg, |_, _| Ok(()))?;
        on_window(&r, &report)?;
        if let Some(path) = log {
            append_window_log(path, &r)?;
        }
        results.push(r);
    }
    results.sort_by_key(|r| r.window);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        build_features, gen_synthetic, FeatureConfig, SyntheticKind, SyntheticSpec,
    };

    fn labels(v: &[i8]) -> LabelMatrix {
        LabelMatrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn plan_arithmetic() {
        let p = make_plan(46_500, 25_000, 12_500, 1_000, 10).unwrap();
        assert_eq!(p.test_range(0), 25_000..37_500);
        assert_eq!(p.test_range(9), 34_000..46_500);
        assert_eq!(p.required_rows(), 46_500);
        match make_plan(46_499, 25_000, 12_500, 1_000, 10) {
            Err(Error::InsufficientRows { required, .. }) => assert_eq!(required, 46_500),
            other => panic!("{other:?}"),
        }

        let p = make_plan(170, 100, 50, 10, 3).unwrap();
        let ranges: Vec<_> = (0..3)
            .map(|i| (p.train_range(i), p.test_range(i)))
            .collect();
        assert_eq!(
            ranges,
            [(0..100, 100..150), (10..110, 110..160), (20..120, 120..170)]
        );
        let single = make_plan(150, 100, 50, 0, 1).unwrap();
        assert_eq!(
            (single.train_range(0), single.test_range(0)),
            (0..100, 100..150)
        );
    }

    #[test]
    fn consecutive_tests_overlap_by_test_minus_step() {
        let p = WalkForwardPlan::default();
        for i in 0..p.n_windows - 1 {
            let (a, b) = (p.test_range(i), p.test_range(i + 1));
            assert_eq!(a.end - b.start, p.test_len - p.step);
            assert_eq!(p.train_range(i).end, a.start);
        }
    }

    #[test]
    fn f1_cases() {
        let t = labels(&[1, 1, -1, -1]);
        let p = labels(&[1, -1, -1, -1]);
        let f = f1_score(&p, &t, 0, F1Average::Macro).unwrap();
        let want = (2.0 / 3.0 + 0.8 + 0.0) / 3.0;
        assert!((f - want).abs() < 1e-15);
        assert!((f - 0.489).abs() < 1e-3);

        let all = labels(&[-1, 0, 1, 0]);
        assert_eq!(f1_score(&all, &all, 0, F1Average::Macro).unwrap(), 1.0);
        let wrong = labels(&[0, 1, -1, 1]);
        assert_eq!(f1_score(&wrong, &all, 0, F1Average::Macro).unwrap(), 0.0);
        assert_eq!(f1_score(&p, &t, 0, F1Average::Micro).unwrap(), 0.75);
        assert!(f1_score(&labels(&[]), &labels(&[]), 0, F1Average::Macro).is_err());
    }

    #[test]
    fn stats_and_quantiles() {
        let s = Stats::of(&[0.4]);
        assert_eq!(
            (s.mean, s.std, s.q1, s.median, s.q3),
            (0.4, 0.0, 0.4, 0.4, 0.4)
        );
        let c = Stats::of(&[0.3; 5]);
        assert_eq!((c.q1, c.median, c.q3), (0.3, 0.3, 0.3));
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn result(window: usize, acc: Vec<f64>) -> WindowResult {
        WindowResult {
            window,
            train_range: 0..1,
            test_range: 1..2,
            threshold: 1e-3,
            chosen_gamma: 0.1,
            f1: acc.clone(),
            accuracy: acc,
            predictions: labels(&[0]),
            truth: labels(&[0]),
        }
    }

    #[test]
    fn aggregate_single_window_is_identity() {
        let syms = vec!["A".to_string(), "B".to_string()];
        let s = aggregate(&[result(0, vec![0.4, 0.6])], &syms).unwrap();
        assert_eq!(s.per_symbol[0].accuracy.mean, 0.4);
        assert_eq!(s.per_symbol[1].accuracy.std, 0.0);
        assert!((s.accuracy_mean - 0.5).abs() < 1e-15);
        assert!(aggregate(&[], &syms).is_err());
    }

    #[test]
    fn log_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("windows.jsonl");
        assert!(read_window_log(&path).unwrap().is_empty());
        append_window_log(&path, &result(0, vec![0.5])).unwrap();
        append_window_log(&path, &result(1, vec![0.7])).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"window\":2,\"tr");
        fs::write(&path, &text).unwrap();
        let back = read_window_log(&path).unwrap();
        assert_eq!(back, [result(0, vec![0.5]), result(1, vec![0.7])]);
        let csv = windows_csv(&back, &["S".to_string()]);
        assert_eq!(
            csv,
            "symbol,window,accuracy,f1,chosen_gamma\nS,0,0.5,0.5,0.1\nS,1,0.7,0.7,0.1\n"
        );
    }

    fn tiny_frame(kind: SyntheticKind) -> FeatureFrame {
        let spec = SyntheticSpec {
            kind,
            n_rows: 700,
            ..SyntheticSpec::default()
        };
        let pt = gen_synthetic(&spec, 12).unwrap();
        let cfg = FeatureConfig {
            lags: (1..=6).collect(),
            windows: vec![5],
            correlation_window: 10,
        };
        build_features(&pt, &cfg).unwrap()
    }

    fn tiny_cfg() -> WindowConfig {
        WindowConfig {
            hidden: vec![6],
            threshold: Threshold::Fixed(1e-3),
            train: TrainConfig {
                gamma_grid: vec![0.5, 1.0],
                epochs: 2,
                epoch_sample: Some(200),
                minibatch: 40,
                seed: 1,
                ..TrainConfig::default()
            },
            f1: F1Average::Macro,
        }
    }

    #[test]
    fn windows_are_reproducible_and_resume() {
        let f = tiny_frame(SyntheticKind::LagRule { lags: vec![1, 2] });
        let plan = make_plan(f.n_rows(), 300, 100, 50, 3).unwrap();
        let cfg = tiny_cfg();
        let a = run_window(&f, &plan, 1, &cfg).unwrap();
        let b = run_window(&f, &plan, 1, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predictions.rows(), 100);
        assert!(run_window(&f, &plan, 3, &cfg).is_err());

        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("w.jsonl");
        let full = run_walkforward(&f, &plan, &cfg, Some(&log), |_, _| Ok(())).unwrap();
        assert_eq!(full[1], a);
        // Drop the last window and resume: only it is retrained.
        write_window_log(&log, &full[..2]).unwrap();
        let mut retrained = Vec::new();
        let resumed = run_walkforward(&f, &plan, &cfg, Some(&log), |r, _| {
            retrained.push(r.window);
            Ok(())
        })
        .unwrap();
        assert_eq!(retrained, [2]);
        assert_eq!(resumed, full);
        assert_eq!(read_window_log(&log).unwrap(), full);
    }

    #[test]
    fn normalization_ignores_rows_after_training_range() {
        let f = tiny_frame(SyntheticKind::RandomWalk);
        let plan = make_plan(f.n_rows(), 300, 100, 50, 1).unwrap();
        let cfg = tiny_cfg();
        let base = run_window(&f, &plan, 0, &cfg).unwrap();
        let mut g = f.clone();
        for r in 400..g.n_rows() {
            for v in g.x.row_mut(r) {
                *v *= 7.0;
            }
            for v in g.next_diffs.row_mut(r) {
                *v *= 7.0;
            }
        }
        let moved = run_window(&g, &plan, 0, &cfg).unwrap();
        assert_eq!(base, moved);
    }
}
