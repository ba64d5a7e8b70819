//! Command-line pipeline: synthetic data, features, training, walk-forward
//! backtest and summary tables, driven by one TOML config.

pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Exit code 1: a computation failed (divergence, non-finite values).
pub const EXIT_COMPUTE: u8 = 1;
/// Exit code 2: bad input files, config or arguments.
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            msg: msg.into(),
        }
    }

    pub fn compute(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPUTE,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CliError {}

impl From<dfx_core::Error> for CliError {
    fn from(e: dfx_core::Error) -> Self {
        use dfx_core::Error as E;
        let code = match e {
            E::Parse { .. }
            | E::Invalid(_)
            | E::InsufficientRows { .. }
            | E::Format { .. }
            | E::Io { .. } => EXIT_INPUT,
            E::Shape { .. } | E::NonFinite(_) | E::Diverged { .. } | E::AllDiverged(_) => {
                EXIT_COMPUTE
            }
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dfx",
    version,
    about = "Multi-symbol direction classifier and walk-forward backtester"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; every section is optional.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the numeric kernels, overriding `run.threads`.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, overriding `run.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic price corpus and contract specs.
    Synth(Common),
    /// Build the feature frame from the price CSV.
    Features(Common),
    /// Sweep the learning rate on the first walk-forward window.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train a single learning rate instead of the configured grid.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run every walk-forward window and simulate the strategy.
    Backtest(Common),
    /// Summarize a finished backtest into top-five tables.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(c)
            | Command::Features(c)
            | Command::Backtest(c)
            | Command::Report(c) => c,
            Command::Train { common, .. } => common,
        }
    }
}

pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.run.threads = Some(t);
    }
    if let Some(o) = &common.out {
        cfg.run.out = o.clone();
    }
    Ok(cfg)
}

/// Runs one parsed command and returns what it printed to stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = load_config(cli.command.common())?;
    if let Command::Train { gamma: Some(g), .. } = &cli.command {
        cfg.train.gamma_grid = vec![*g];
    }
    cfg.validate()?;
    let job = || match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Features(_) => commands::features(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Backtest(_) => commands::backtest(&cfg),
        Command::Report(_) => report::report(&cfg),
    };
    match cfg.run.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
