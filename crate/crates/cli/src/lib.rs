//! Command-line pipeline: ingest raw CSVs, synthesize panels, select
//! features, run the regime comparison and the extreme-weather diagnostics,
//! and merge reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stlf::eval::EvalError;
use stlf::mifilter::MiFilterError;
use stlf::panel::PanelError;
use stlf::pcmci::PcmciError;
use stlf::scm::ScmError;
use thiserror::Error;

pub use config::{RunConfig, CONFIG_ENV};

// ---------------------------------------------------------------------------
// Errors and exit codes

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PcmciError> for CliError {
    fn from(e: PcmciError) -> Self {
        match e {
            PcmciError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            PcmciError::Test { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MiFilterError> for CliError {
    fn from(e: MiFilterError) -> Self {
        match e {
            MiFilterError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            MiFilterError::Estimator { .. } => CliError::Numerical(e.to_string()),
            MiFilterError::Panel(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<ScmError> for CliError {
    fn from(e: ScmError) -> Self {
        match e {
            ScmError::Panel(_) => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            EvalError::InvalidConfig(_) | EvalError::Unknown { .. } => {
                CliError::Usage(e.to_string())
            }
            EvalError::Pcmci(PcmciError::InvalidConfig(_))
            | EvalError::MiFilter(MiFilterError::InvalidConfig(_)) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "stlf",
    version,
    about = "Causal feature selection for short-term load forecasting"
)]
pub struct Cli {
    /// Run configuration file (TOML). Defaults apply to every missing key.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a canonical panel from a load CSV and a weather CSV.
    Ingest(IngestArgs),
    /// Simulate a panel from a standard fixture or a spec file.
    Synth(SynthArgs),
    /// Select weather features with PCMCI or the MI filter.
    Select(SelectArgs),
    /// Rolling-origin comparison of models across feature regimes.
    Evaluate(EvaluateArgs),
    /// Detect extreme-weather windows and score models on them.
    Ood(OodArgs),
    /// Merge report directories and print a summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub load: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long)]
    pub region: String,
    /// Weather columns to keep; defaults to every column of the weather file.
    #[arg(long, value_delimiter = ',')]
    pub weather_vars: Vec<String>,
    /// File with one `YYYY-MM-DD` holiday per line.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long)]
    pub consumer_type: Option<String>,
    /// Output panel CSV; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Standard fixture name (chain3, mediation8, independent6).
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub fixture: Option<String>,
    /// Spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of hourly rows.
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    /// Output panel CSV; the spec goes next to it as `<stem>.spec.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMethod {
    Causal,
    Mi,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// One or more panel CSVs; several panels also yield a majority consensus.
    #[arg(long, num_args = 1.., required = true)]
    pub panel: Vec<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub method: SelectMethod,
    /// Selection JSON; causal graphs go next to it as `<stem>.<region>.graph.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Overrides shared by the evaluation commands.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Panel CSVs, one per city; defaults to `data.panels` of the config.
    #[arg(long, num_args = 1..)]
    pub panel: Vec<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub regimes: Vec<String>,
    /// Worker threads; 0 uses every processor.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub train_span: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: EvalArgs,
}

#[derive(Debug, Args)]
pub struct OodArgs {
    #[command(flatten)]
    pub common: EvalArgs,
    /// Only detect windows; skip model training and scoring.
    #[arg(long)]
    pub detect_only: bool,
    #[arg(long)]
    pub holdout_hours: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report directories or `report.json` files.
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Directory for the merged report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Ingest(a) => single_threaded(|| commands::ingest(&cfg, &a)),
        Command::Synth(a) => single_threaded(|| commands::synth(&cfg, &a)),
        Command::Select(a) => single_threaded(|| commands::select(&cfg, &a)),
        Command::Evaluate(a) => commands::evaluate(cfg, &a),
        Command::Ood(a) => commands::ood(cfg, &a),
        Command::Report(a) => single_threaded(|| commands::report(&a)),
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

fn single_threaded(f: impl FnOnce() -> Result<(), CliError> + Send) -> Result<(), CliError> {
    thread_pool(1)?.install(f)
}
