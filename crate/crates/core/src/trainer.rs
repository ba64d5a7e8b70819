//! Mini-batch SGD with epoch subsampling, learning-rate halving and a
//! learning-rate sweep scored on a hold-out range.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_range, encode_one_hot, FeatureFrame, LabelMatrix, OneHotTargets};
use crate::error::{Error, Result};
use crate::matrixkit::Matrix;
use crate::network::{
    backward, cross_entropy, forward, init_params, predict_labels, NetworkParams, Topology,
};
use crate::rng::{derive_seed, Mt64, Stream};

/// When to halve the learning rate after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HalvingRule {
    /// Halve when the epoch loss did not go down.
    #[default]
    NonDecrease,
    /// Halve when the epoch loss did not go up.
    NonIncrease,
    Off,
}

impl HalvingRule {
    pub fn should_halve(self, previous: f64, current: f64) -> bool {
        match self {
            HalvingRule::NonDecrease => current >= previous,
            HalvingRule::NonIncrease => current <= previous,
            HalvingRule::Off => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma_grid: Vec<f64>,
    pub epochs: usize,
    /// Rows drawn per epoch; `None` means the training-set size.
    pub epoch_sample: Option<usize>,
    pub minibatch: usize,
    pub seed: u64,
    pub halving: HalvingRule,
    /// Stop once the epoch loss falls below this.
    pub early_stop_tau: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_grid: default_gamma_grid(),
            epochs: 50,
            epoch_sample: None,
            minibatch: 256,
            seed: 0,
            halving: HalvingRule::NonDecrease,
            early_stop_tau: None,
        }
    }
}

/// 0.1, 0.2, ..., 1.0, each computed as k/10.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

impl TrainConfig {
    pub fn epoch_sample_for(&self, n_train: usize) -> usize {
        self.epoch_sample.unwrap_or(n_train)
    }

    pub fn validate(&self, n_train: usize) -> Result<()> {
        if self.gamma_grid.is_empty()
            || self.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite()))
        {
            return Err(Error::invalid("gamma grid must be non-empty and positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        let n_epoch = self.epoch_sample_for(n_train);
        if self.minibatch == 0 || self.minibatch > n_epoch || n_epoch > n_train {
            return Err(Error::invalid(format!(
                "need 1 <= minibatch <= epoch_sample <= training rows, got {} / {} / {}",
                self.minibatch, n_epoch, n_train
            )));
        }
        Ok(())
    }
}

/// Loss trace and outcome of training at one starting learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub gamma: f64,
    /// Entry 0 is the loss before the first update; entry e follows epoch e.
    pub loss_trace: Vec<f64>,
    /// Learning rate used in each completed epoch.
    pub gamma_trace: Vec<f64>,
    /// Epochs (1-based) after which the learning rate was halved.
    pub halving_events: Vec<usize>,
    pub holdout_rate: Option<ClassificationRate>,
    /// Set when training diverged.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRate {
    pub per_symbol: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub candidates: Vec<CandidateReport>,
    pub chosen_gamma: f64,
    pub chosen_index: usize,
    #[serde(skip)]
    pub best_params: Option<NetworkParams>,
}

impl TrainReport {
    pub fn chosen(&self) -> &CandidateReport {
        &self.candidates[self.chosen_index]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Epochs (1-based) at which `rule` halves the learning rate for a trace
/// whose entry 0 is the pre-training loss.
pub fn halving_events(trace: &[f64], rule: HalvingRule) -> Vec<usize> {
    (1..trace.len())
        .filter(|&e| rule.should_halve(trace[e - 1], trace[e]))
        .collect()
}

/// Draws the epoch subset uniformly with replacement.
pub fn sample_epoch(n_train: usize, n_epoch: usize, rng: &mut Mt64) -> Vec<usize> {
    (0..n_epoch).map(|_| rng.index(n_train)).collect()
}

/// Mean cross-entropy over `idx`, evaluated in chunks of `chunk` rows.
pub fn mean_loss(
    params: &NetworkParams,
    x: &Matrix,
    y: &OneHotTargets,
    idx: &[usize],
    chunk: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for part in idx.chunks(chunk.max(1)) {
        let out = forward(params, &x.gather_rows(part))?;
        let t = OneHotTargets {
            y: y.y.gather_rows(part),
            n_symbols: y.n_symbols,
        };
        total += cross_entropy(out.output(), &t)?.value * part.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// One pass of mini-batch updates over `idx`, in order.
pub fn run_epoch(
    params: &mut NetworkParams,
    x: &Matrix,
    y: &OneHotTargets,
    idx: &[usize],
    minibatch: usize,
    gamma: f64,
) -> Result<()> {
    for batch in idx.chunks(minibatch) {
        let xb = x.gather_rows(batch);
        let yb = OneHotTargets {
            y: y.y.gather_rows(batch),
            n_symbols: y.n_symbols,
        };
        let cache = forward(params, &xb)?;
        let grads = backward(params, &cache, &yb)?;
        params.apply(-gamma, &grads)?;
    }
    Ok(())
}

/// Samples an epoch subset, trains on it and returns the loss over that
/// subset afterwards.
pub fn sgd_epoch(
    params: &mut NetworkParams,
    x: &Matrix,
    y: &OneHotTargets,
    cfg: &TrainConfig,
    gamma: f64,
    rng: &mut Mt64,
) -> Result<f64> {
    let idx = sample_epoch(x.rows(), cfg.epoch_sample_for(x.rows()), rng);
    run_epoch(params, x, y, &idx, cfg.minibatch, gamma)?;
    let loss = mean_loss(params, x, y, &idx, cfg.minibatch)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { gamma });
    }
    Ok(loss)
}

pub struct TrainOutcome {
    pub params: NetworkParams,
    pub loss_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    pub halving_events: Vec<usize>,
}

/// Runs up to `cfg.epochs` epochs starting at `gamma`, halving it according
/// to `cfg.halving`.
pub fn train_with_halving(
    mut params: NetworkParams,
    x: &Matrix,
    y: &OneHotTargets,
    cfg: &TrainConfig,
    gamma: f64,
) -> Result<TrainOutcome> {
    cfg.validate(x.rows())?;
    if x.rows() != y.y.rows() {
        return Err(Error::Shape {
            op: "train_with_halving",
            left: x.shape(),
            right: y.y.shape(),
        });
    }
    let mut rng = Mt64::new(derive_seed(cfg.seed, Stream::EpochSample));
    let n_epoch = cfg.epoch_sample_for(x.rows());
    let mut idx = sample_epoch(x.rows(), n_epoch, &mut rng);
    let baseline = mean_loss(&params, x, y, &idx, cfg.minibatch)?;
    if !baseline.is_finite() {
        return Err(Error::Diverged { gamma });
    }
    let mut loss_trace = vec![baseline];
    let mut gamma_trace = Vec::with_capacity(cfg.epochs);
    let mut halvings = Vec::new();
    let mut g = gamma;
    for epoch in 1..=cfg.epochs {
        if epoch > 1 {
            idx = sample_epoch(x.rows(), n_epoch, &mut rng);
        }
        run_epoch(&mut params, x, y, &idx, cfg.minibatch, g)?;
        let loss = mean_loss(&params, x, y, &idx, cfg.minibatch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { gamma });
        }
        gamma_trace.push(g);
        if cfg.halving.should_halve(loss_trace[epoch - 1], loss) {
            g /= 2.0;
            halvings.push(epoch);
        }
        loss_trace.push(loss);
        if cfg.early_stop_tau.is_some_and(|tau| loss < tau) {
            break;
        }
    }
    Ok(TrainOutcome {
        params,
        loss_trace,
        gamma_trace,
        halving_events: halvings,
    })
}

pub fn classification_rate(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<ClassificationRate> {
    if pred.rows() != truth.rows() || pred.n_symbols() != truth.n_symbols() {
        return Err(Error::Shape {
            op: "classification_rate",
            left: (pred.rows(), pred.n_symbols()),
            right: (truth.rows(), truth.n_symbols()),
        });
    }
    if pred.rows() == 0 || pred.n_symbols() == 0 {
        return Err(Error::invalid("classification rate of an empty label set"));
    }
    let n = pred.rows() as f64;
    let per_symbol: Vec<f64> = (0..pred.n_symbols())
        .map(|s| {
            (0..pred.rows())
                .filter(|&r| pred.get(r, s) == truth.get(r, s))
                .count() as f64
                / n
        })
        .collect();
    let mean = per_symbol.iter().sum::<f64>() / per_symbol.len() as f64;
    Ok(ClassificationRate { per_symbol, mean })
}

/// Trains one fresh network per learning rate on `train` and picks the one
/// with the best mean hold-out classification rate (ties go to the smaller
/// rate). `on_candidate` sees every successfully trained network.
pub fn sweep_gamma_with<F>(
    frame: &FeatureFrame,
    train: Range<usize>,
    holdout: Range<usize>,
    topo: &Topology,
    cfg: &TrainConfig,
    on_candidate: F,
) -> Result<TrainReport>
where
    F: Fn(f64, &NetworkParams) -> Result<()> + Sync,
{
    check_range(&train, frame.n_rows())?;
    check_range(&holdout, frame.n_rows())?;
    if train.start < holdout.end && holdout.start < train.end {
        return Err(Error::invalid(format!(
            "train rows {train:?} overlap hold-out rows {holdout:?}"
        )));
    }
    if topo.n_inputs() != frame.n_features() || topo.n_symbols() != frame.n_symbols() {
        return Err(Error::invalid(format!(
            "topology {:?} does not fit {} features for {} symbols",
            topo.layer_sizes(),
            frame.n_features(),
            frame.n_symbols()
        )));
    }
    cfg.validate(train.len())?;
    let labels = frame.labels()?;
    let x = frame.x.slice_rows(train.clone())?;
    let y = encode_one_hot(labels, train)?;
    let hx = frame.x.slice_rows(holdout.clone())?;
    let truth = labels.slice_rows(holdout)?;
    let init = init_params(topo, derive_seed(cfg.seed, Stream::Init));

    let results: Vec<(CandidateReport, Option<NetworkParams>)> = cfg
        .gamma_grid
        .par_iter()
        .map(|&gamma| -> Result<_> {
            match train_with_halving(init.clone(), &x, &y, cfg, gamma) {
                Ok(out) => {
                    let rate = classification_rate(&predict_labels(&out.params, &hx)?, &truth)?;
                    on_candidate(gamma, &out.params)?;
                    Ok((
                        CandidateReport {
                            gamma,
                            loss_trace: out.loss_trace,
                            gamma_trace: out.gamma_trace,
                            halving_events: out.halving_events,
                            holdout_rate: Some(rate),
                            error: None,
                        },
                        Some(out.params),
                    ))
                }
                Err(e @ Error::Diverged { .. }) => Ok((
                    CandidateReport {
                        gamma,
                        loss_trace: Vec::new(),
                        gamma_trace: Vec::new(),
                        halving_events: Vec::new(),
                        holdout_rate: None,
                        error: Some(e.to_string()),
                    },
                    None,
                )),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let reports: Vec<CandidateReport> = results.iter().map(|(c, _)| c.clone()).collect();
    let Some(chosen_index) = select_candidate(&reports) else {
        return Err(Error::AllDiverged(cfg.gamma_grid.clone()));
    };
    let (candidates, mut params): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(TrainReport {
        chosen_gamma: candidates[chosen_index].gamma,
        chosen_index,
        best_params: params.swap_remove(chosen_index),
        candidates,
    })
}

/// Index of the trained candidate with the best mean hold-out rate; ties go
/// to the smaller learning rate.
pub fn select_candidate(candidates: &[CandidateReport]) -> Option<usize> {
    let mut chosen: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(rate) = &c.holdout_rate else {
            continue;
        };
        let better = match chosen {
            None => true,
            Some((j, best)) => {
                rate.mean > best || (rate.mean == best && c.gamma < candidates[j].gamma)
            }
        };
        if better {
            chosen = Some((i, rate.mean));
        }
    }
    chosen.map(|(i, _)| i)
}

pub fn sweep_gamma(
    frame: &FeatureFrame,
    train: Range<usize>,
    holdout: Range<usize>,
    topo: &Topology,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    sweep_gamma_with(frame, train, holdout, topo, cfg, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        build_features, gen_synthetic, normalize, FeatureConfig, SyntheticSpec, Threshold,
    };
    use crate::network::init_params_with_std;

    fn small_frame(seed: u64) -> FeatureFrame {
        let spec = SyntheticSpec {
            n_rows: 1200,
            ..SyntheticSpec::default()
        };
        let pt = gen_synthetic(&spec, seed).unwrap();
        let cfg = FeatureConfig {
            lags: (1..=8).collect(),
            windows: vec![5],
            correlation_window: 10,
        };
        let f = build_features(&pt, &cfg).unwrap();
        let mut f = normalize(&f, 0..800).unwrap();
        f.relabel(Threshold::Fixed(1e-3), 0..800).unwrap();
        f
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            gamma_grid: vec![0.5, 1.0],
            epochs: 3,
            epoch_sample: Some(400),
            minibatch: 50,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_grid_is_ten_tenths() {
        let g = default_gamma_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[9], 1.0);
    }

    #[test]
    fn halving_on_constructed_traces() {
        let down = [5.0, 4.0, 3.0, 2.0, 1.0];
        let flat = [2.0; 6];
        let bump = [5.0, 4.0, 4.5, 3.0, 2.0];
        let r = HalvingRule::NonDecrease;
        assert!(halving_events(&down, r).is_empty());
        assert_eq!(halving_events(&flat, r), [1, 2, 3, 4, 5]);
        assert_eq!(halving_events(&bump, r), [2]);
        assert_eq!(
            halving_events(&down, HalvingRule::NonIncrease),
            [1, 2, 3, 4]
        );
        assert!(halving_events(&flat, HalvingRule::Off).is_empty());
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig::default();
        assert!(c.validate(1000).is_ok());
        assert!(c.validate(100).is_err());
        let bad = TrainConfig {
            gamma_grid: vec![0.1, -1.0],
            ..TrainConfig::default()
        };
        assert!(bad.validate(1000).is_err());
        let bad = TrainConfig {
            epoch_sample: Some(2000),
            ..TrainConfig::default()
        };
        assert!(bad.validate(1000).is_err());
    }

    #[test]
    fn classification_rate_cases() {
        let t = LabelMatrix::from_rows(&[vec![1, 0], vec![-1, 0], vec![0, 1]]).unwrap();
        assert_eq!(classification_rate(&t, &t).unwrap().mean, 1.0);
        let shifted = LabelMatrix::from_rows(&[vec![-1, 1], vec![0, 1], vec![1, -1]]).unwrap();
        assert_eq!(classification_rate(&shifted, &t).unwrap().mean, 0.0);
        let half = LabelMatrix::from_rows(&[vec![1, 1], vec![-1, 1], vec![1, 1]]).unwrap();
        let r = classification_rate(&half, &t).unwrap();
        assert!((r.per_symbol[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_symbol[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.mean - 0.5).abs() < 1e-15);
        let empty = LabelMatrix::new(0, 2, vec![]).unwrap();
        assert!(classification_rate(&empty, &empty).is_err());
    }

    #[test]
    fn random_predictions_score_a_third() {
        let mut rng = Mt64::new(17);
        let mut draw =
            || -> Vec<Vec<i8>> { (0..10_000).map(|_| vec![rng.index(3) as i8 - 1]).collect() };
        let a = LabelMatrix::from_rows(&draw()).unwrap();
        let b = LabelMatrix::from_rows(&draw()).unwrap();
        let r = classification_rate(&a, &b).unwrap().mean;
        assert!((r - 1.0 / 3.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn zero_gamma_leaves_params_unchanged() {
        let f = small_frame(1);
        let topo = Topology::with_hidden(f.n_features(), &[8], f.n_symbols()).unwrap();
        let p0 = init_params(&topo, 3);
        let y = encode_one_hot(f.labels().unwrap(), 0..800).unwrap();
        let x = f.x.slice_rows(0..800).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            ..quick_cfg()
        };
        let out = train_with_halving(p0.clone(), &x, &y, &cfg, 0.0).unwrap();
        assert_eq!(out.params, p0);
        let all: Vec<usize> = (0..800).collect();
        let full = mean_loss(&p0, &x, &y, &all, 64).unwrap();
        assert!((full - 3f64.ln()).abs() < 0.05);
        // Loss changes only through the epoch subsets, so halving fires
        // whenever a resample happens to score no better.
        for w in out.gamma_trace.windows(2) {
            assert!(w[1] == w[0] || w[1] == w[0] / 2.0);
        }
    }

    #[test]
    fn sgd_epoch_is_a_plain_axpy() {
        let f = small_frame(2);
        let topo = Topology::with_hidden(f.n_features(), &[6], f.n_symbols()).unwrap();
        let p0 = init_params_with_std(&topo, 5, 0.3);
        let x = f.x.slice_rows(0..10).unwrap();
        let y = encode_one_hot(f.labels().unwrap(), 0..10).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let mut stepped = p0.clone();
        run_epoch(&mut stepped, &x, &y, &idx, 10, 0.7).unwrap();
        let g = backward(&p0, &forward(&p0, &x).unwrap(), &y).unwrap();
        let mut manual = p0.clone();
        manual.apply(-0.7, &g).unwrap();
        assert_eq!(stepped, manual);
    }

    #[test]
    fn small_step_lowers_single_observation_loss() {
        let mut rng = Mt64::new(23);
        for trial in 0..20 {
            let topo = Topology::new(vec![5, 4, 6], 2).unwrap();
            let p = init_params_with_std(&topo, trial, 1.0);
            let x = Matrix::from_fn(1, 5, |_, _| rng.gaussian(0.0, 1.0));
            let l = LabelMatrix::from_rows(&[vec![rng.index(3) as i8 - 1, rng.index(3) as i8 - 1]])
                .unwrap();
            let y = encode_one_hot(&l, 0..1).unwrap();
            let before = mean_loss(&p, &x, &y, &[0], 1).unwrap();
            let mut q = p.clone();
            run_epoch(&mut q, &x, &y, &[0], 1, 1e-4).unwrap();
            let after = mean_loss(&q, &x, &y, &[0], 1).unwrap();
            assert!(after < before, "trial {trial}: {before} -> {after}");
        }
    }

    #[test]
    fn training_reduces_loss_on_lag_rule() {
        let f = small_frame(3);
        let topo = Topology::with_hidden(f.n_features(), &[16], f.n_symbols()).unwrap();
        let x = f.x.slice_rows(0..800).unwrap();
        let y = encode_one_hot(f.labels().unwrap(), 0..800).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            epoch_sample: Some(800),
            minibatch: 20,
            halving: HalvingRule::Off,
            ..quick_cfg()
        };
        let out = train_with_halving(init_params(&topo, 1), &x, &y, &cfg, 0.5).unwrap();
        assert!(
            out.loss_trace[20] < out.loss_trace[1],
            "{:?}",
            out.loss_trace
        );
    }

    #[test]
    fn sweep_is_deterministic_across_thread_counts() {
        let f = small_frame(4);
        let topo = Topology::with_hidden(f.n_features(), &[8], f.n_symbols()).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sweep_gamma(&f, 0..800, 800..1000, &topo, &quick_cfg()).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(
            a.best_params.unwrap().to_bytes(),
            b.best_params.unwrap().to_bytes()
        );
        assert_eq!(a.candidates.len(), 2);
    }

    #[test]
    fn single_gamma_sweep_chooses_it() {
        let f = small_frame(5);
        let topo = Topology::with_hidden(f.n_features(), &[4], f.n_symbols()).unwrap();
        let cfg = TrainConfig {
            gamma_grid: vec![0.3],
            ..quick_cfg()
        };
        let r = sweep_gamma(&f, 0..800, 800..1000, &topo, &cfg).unwrap();
        assert_eq!(r.chosen_gamma, 0.3);
    }

    #[test]
    fn sweep_rejects_overlap() {
        let f = small_frame(6);
        let topo = Topology::with_hidden(f.n_features(), &[4], f.n_symbols()).unwrap();
        assert!(sweep_gamma(&f, 0..800, 700..900, &topo, &quick_cfg()).is_err());
        let wide = Topology::with_hidden(f.n_features() + 1, &[4], f.n_symbols()).unwrap();
        assert!(sweep_gamma(&f, 0..800, 800..1000, &wide, &quick_cfg()).is_err());
    }

    #[test]
    fn non_finite_loss_names_gamma() {
        let f = small_frame(7);
        let topo = Topology::with_hidden(f.n_features(), &[4], f.n_symbols()).unwrap();
        let mut p = init_params(&topo, 1);
        p.biases[1][0] = f64::NAN;
        let x = f.x.slice_rows(0..800).unwrap();
        let y = encode_one_hot(f.labels().unwrap(), 0..800).unwrap();
        match train_with_halving(p, &x, &y, &quick_cfg(), 0.25) {
            Err(Error::Diverged { gamma }) => assert_eq!(gamma, 0.25),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.loss_trace)),
        }
    }

    #[test]
    fn selection_prefers_rate_then_smaller_gamma() {
        let cand = |gamma: f64, mean: Option<f64>| CandidateReport {
            gamma,
            loss_trace: vec![],
            gamma_trace: vec![],
            halving_events: vec![],
            holdout_rate: mean.map(|m| ClassificationRate {
                per_symbol: vec![m],
                mean: m,
            }),
            error: mean.is_none().then(|| "diverged".to_string()),
        };
        assert_eq!(
            select_candidate(&[cand(0.1, Some(0.5)), cand(0.2, Some(0.7))]),
            Some(1)
        );
        assert_eq!(
            select_candidate(&[cand(0.2, Some(0.7)), cand(0.1, Some(0.7))]),
            Some(1)
        );
        assert_eq!(
            select_candidate(&[cand(0.1, None), cand(0.2, Some(0.4))]),
            Some(1)
        );
        assert_eq!(select_candidate(&[cand(0.1, None), cand(0.2, None)]), None);
    }
}
