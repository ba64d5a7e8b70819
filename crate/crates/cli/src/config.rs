use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dfx_core::dataset::{FeatureConfig, SyntheticSpec, Threshold};
use dfx_core::strategy::{ZeroLabel, DEFAULT_INITIAL_CASH};
use dfx_core::trainer::TrainConfig;
use dfx_core::walkforward::{F1Average, WalkForwardPlan, WindowConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Price data and the files the strategy stage reads. Relative paths are
/// resolved against the config file's directory; unset paths fall back to
/// the files `synth` writes into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub prices: Option<PathBuf>,
    pub contracts: Option<PathBuf>,
    /// Symbol to `date,return` CSV.
    pub benchmarks: BTreeMap<String, PathBuf>,
    pub interval_minutes: i64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prices: None,
            contracts: None,
            benchmarks: BTreeMap::new(),
            interval_minutes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub spec: SyntheticSpec,
    /// Contract size written for every generated symbol.
    pub contract_size: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::default(),
            contract_size: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub lags: Vec<usize>,
    pub windows: Vec<usize>,
    pub correlation_window: usize,
    pub threshold: Threshold,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            lags: f.lags,
            windows: f.windows,
            correlation_window: f.correlation_window,
            threshold: Threshold::default(),
        }
    }
}

impl FeaturesSection {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            lags: self.lags.clone(),
            windows: self.windows.clone(),
            correlation_window: self.correlation_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            hidden: dfx_core::network::DEFAULT_HIDDEN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkForwardSection {
    pub train_len: usize,
    pub test_len: usize,
    pub step: usize,
    pub n_windows: usize,
    pub f1: F1Average,
}

impl Default for WalkForwardSection {
    fn default() -> Self {
        let p = WalkForwardPlan::default();
        Self {
            train_len: p.train_len,
            test_len: p.test_len,
            step: p.step,
            n_windows: p.n_windows,
            f1: F1Average::Macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub initial_cash: f64,
    pub zero_label: ZeroLabel,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            initial_cash: DEFAULT_INITIAL_CASH,
            zero_label: ZeroLabel::Hold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

/// Train settings as written in the config; the seed comes from `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub gamma_grid: Vec<f64>,
    pub epochs: usize,
    pub epoch_sample: Option<usize>,
    pub minibatch: usize,
    pub halving: dfx_core::trainer::HalvingRule,
    pub early_stop_tau: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            gamma_grid: t.gamma_grid,
            epochs: t.epochs,
            epoch_sample: t.epoch_sample,
            minibatch: t.minibatch,
            halving: t.halving,
            early_stop_tau: t.early_stop_tau,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub features: FeaturesSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub walkforward: WalkForwardSection,
    pub strategy: StrategySection,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses a TOML config and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.prices.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.contracts.as_mut() {
            resolve(p);
        }
        cfg.data.benchmarks.values_mut().for_each(resolve);
        resolve(&mut cfg.run.out);
        Ok(cfg)
    }

    pub fn out_dir(&self) -> &Path {
        &self.run.out
    }

    pub fn prices_path(&self) -> PathBuf {
        self.data
            .prices
            .clone()
            .unwrap_or_else(|| self.run.out.join("prices.csv"))
    }

    pub fn contracts_path(&self) -> PathBuf {
        self.data
            .contracts
            .clone()
            .unwrap_or_else(|| self.run.out.join("contracts.csv"))
    }

    pub fn features_dir(&self) -> PathBuf {
        self.run.out.join("features")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma_grid: self.train.gamma_grid.clone(),
            epochs: self.train.epochs,
            epoch_sample: self.train.epoch_sample,
            minibatch: self.train.minibatch,
            seed: self.run.seed,
            halving: self.train.halving,
            early_stop_tau: self.train.early_stop_tau,
        }
    }

    pub fn plan(&self) -> WalkForwardPlan {
        WalkForwardPlan {
            train_len: self.walkforward.train_len,
            test_len: self.walkforward.test_len,
            step: self.walkforward.step,
            n_windows: self.walkforward.n_windows,
        }
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            hidden: self.network.hidden.clone(),
            threshold: self.features.threshold,
            train: self.train_config(),
            f1: self.walkforward.f1,
        }
    }

    /// Checks every constraint that does not need the data itself.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::input(m));
        self.features
            .feature_config()
            .validate()
            .map_err(CliError::from)?;
        if let Threshold::Fixed(t) = self.features.threshold {
            if !(t > 0.0) {
                return bad(format!("features.threshold must be positive, got {t}"));
            }
        }
        if self.network.hidden.contains(&0) {
            return bad("network.hidden sizes must be positive".into());
        }
        let w = &self.walkforward;
        if w.train_len == 0
            || w.test_len == 0
            || w.n_windows == 0
            || (w.n_windows > 1 && w.step == 0)
        {
            return bad("walkforward lengths, step and window count must be positive".into());
        }
        self.train_config()
            .validate(w.train_len)
            .map_err(|e| CliError::input(format!("train: {e}")))?;
        if !(self.strategy.initial_cash > 0.0) {
            return bad("strategy.initial_cash must be positive".into());
        }
        if self.data.interval_minutes <= 0 {
            return bad("data.interval_minutes must be positive".into());
        }
        if self.run.threads == Some(0) {
            return bad("run.threads must be at least 1".into());
        }
        Ok(())
    }

    /// Errors naming the first configured input file that does not exist.
    pub fn check_inputs(&self, paths: &[PathBuf]) -> Result<(), CliError> {
        for p in paths {
            if !p.is_file() {
                return Err(CliError::input(format!(
                    "input file not found: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
