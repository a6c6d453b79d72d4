mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use error::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad option value, bad config file)
  3  I/O error (missing or unreadable file, write failure)
  4  validation error (malformed rows, empty sample, inconsistent data or parameters)
  5  other failure
On failure the last line on stderr is a JSON record {\"error\": {\"kind\", \"exit_code\", \"message\"}}.";

#[derive(Parser, Debug)]
#[command(name = "msdhawkes", version, about = "State-dependent Hawkes processes: simulate, estimate, diagnose", after_help = EXIT_CODES)]
struct Cli {
    /// TOML file of flag values; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for fits and replicate studies (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Turn order-book files into event and state files.
    Prepare(PrepareArgs),
    /// Simulate an event file and its state path.
    Simulate(SimulateArgs),
    /// Maximum-likelihood fit.
    Fit(FitArgs),
    /// EM fit.
    FitEm(FitEmArgs),
    /// AIC table over kernel orders and covariate sets.
    Select(SelectArgs),
    /// Time-change residuals and KS verdicts of fitted parameters.
    Residuals(ResidualsArgs),
    /// Spectral radius of the state-dependent kernel-norm matrix over a grid.
    Endogeneity(EndogeneityArgs),
    /// Next-event type prediction against the Last and Imbalance benchmarks.
    Predict(PredictArgs),
    /// Simulation studies at configurable replicate counts.
    Replicate(ReplicateArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Order-book CSV files, comma separated (one trading day each).
    #[arg(long, value_delimiter = ',', required = true)]
    pub input: Vec<PathBuf>,
    /// Window start as HH:MM[:SS[.mmm]].
    #[arg(long, default_value = "09:30")]
    pub start: String,
    /// Window end as HH:MM[:SS[.mmm]].
    #[arg(long, default_value = "16:30")]
    pub end: String,
    /// Covariates in column order, e.g. "I,S2"; "none" for none.
    #[arg(long, default_value = "I,S2")]
    pub covariates: String,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
    #[arg(long, value_enum, default_value_t = S3Arg::Prose)]
    pub s3_mode: S3Arg,
    /// Keep every row sharing a millisecond instead of only the last.
    #[arg(long)]
    pub keep_duplicates: bool,
    /// Directory receiving <stem>.events.csv and <stem>.state.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum S3Arg {
    Prose,
    Literal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum KernelArg {
    Exponential,
    Powerlaw,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Number of event types.
    #[arg(long, default_value_t = 2)]
    pub de: usize,
    /// Exponential terms per kernel.
    #[arg(long, default_value_t = 1)]
    pub dn: usize,
    /// State dimension.
    #[arg(long, default_value_t = 2)]
    pub dx: usize,
    /// Horizon in seconds.
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 1000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::Exponential)]
    pub kernel: KernelArg,
    /// Parameters (fit JSON or parameter JSON); built-in study values when
    /// omitted (exponential with dn 1 or 3, or power law, at de = dx = 2).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Jump rate of the state process.
    #[arg(long, default_value_t = 1.0)]
    pub state_rate: f64,
    #[arg(long, default_value_t = msdhawkes::simulate::DEFAULT_MAX_EVENTS)]
    pub max_events: usize,
    /// Directory receiving events.csv and state.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    /// Event file (time_s,type).
    #[arg(long)]
    pub events: PathBuf,
    /// State file (tau_s,x_1,..); the horizon is its last row.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Horizon when no state file is given.
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<f64>,
    /// State columns used as covariates, 1-based ("1,2"), "all" or "none".
    #[arg(long, default_value = "all")]
    pub covariates: String,
    /// Number of event types (default: largest type in the file).
    #[arg(long)]
    pub de: Option<usize>,
    /// Drop all but the last of events sharing a timestamp.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Args, Debug, Clone)]
pub struct MleArgs {
    #[arg(long, default_value_t = 12)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub gtol: f64,
    #[arg(long, default_value_t = 1e-11)]
    pub ftol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Fix cross-excitation kernels at zero.
    #[arg(long)]
    pub no_cross: bool,
    /// Extra starting point (fit JSON or parameter JSON).
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value_t = 1)]
    pub dn: usize,
    #[command(flatten)]
    pub mle: MleArgs,
    /// Fit JSON (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Parameter CSV (name,value); defaults to <output stem>.params.csv.
    #[arg(long)]
    pub params_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitEmArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value_t = 1)]
    pub dn: usize,
    #[arg(long, default_value_t = 1)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub max_sweeps: usize,
    /// Starting point (fit JSON or parameter JSON).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub params_csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Kernel orders, "1..5" or "1,2,3".
    #[arg(long, default_value = "1..5")]
    pub dn: String,
    /// Covariate sets separated by ';', each like --covariates
    /// (default: the --covariates set alone).
    #[arg(long)]
    pub covariate_sets: Option<String>,
    #[command(flatten)]
    pub mle: MleArgs,
    /// Random starts for orders warm-started from the order below.
    #[arg(long)]
    pub nested_starts: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ResidualsArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Fit JSON or parameter JSON.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Residual CSV, one column per type.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// KS verdicts (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct EndogeneityArgs {
    /// Fit JSON or parameter JSON.
    #[arg(long)]
    pub params: PathBuf,
    /// Values per state column separated by ';', each "a,b,c" or
    /// "lo:hi:n"; the grid is their product. Default "-1:1:21" per column.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum RuleArg {
    /// Negative imbalance predicts type 1, positive type 2.
    Market,
    /// Negative imbalance predicts type 2, positive type 1.
    Aggressive,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long)]
    pub params: PathBuf,
    /// Selected covariate column (1-based) holding the imbalance.
    #[arg(long)]
    pub imbalance_column: Option<usize>,
    #[arg(long, value_enum, default_value_t = RuleArg::Market)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Study {
    /// Single-exponential parameter recovery.
    Table1,
    /// AIC order selection on three-term exponential data.
    AicOrder,
    /// AIC order selection on power-law data across horizons.
    Powerlaw,
    /// Estimate dispersion across horizons, fitted from the truth.
    Convergence,
}

#[derive(Args, Debug)]
pub struct ReplicateArgs {
    #[arg(long, value_enum)]
    pub study: Study,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Horizons, comma separated (study default when omitted).
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kernel orders of the selection studies.
    #[arg(long, default_value = "1..5")]
    pub dn: String,
    #[arg(long, default_value_t = 12)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 2)]
    pub nested_starts: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn run() -> Result<(), CliError> {
    let argv: Vec<_> = std::env::args_os().collect();
    let cmd = Cli::command().args_override_self(true);
    let argv = config::expand(argv, &cmd)?;
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            if !e.use_stderr() {
                e.exit();
            }
            let _ = e.print();
            let text = e.render().to_string();
            return Err(CliError::usage(text.lines().next().unwrap_or_default().trim_start_matches("error: ")));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::other(e.to_string()))?;
    }

    match cli.command {
        Cmd::Prepare(a) => commands::prepare(a),
        Cmd::Simulate(a) => commands::simulate(a),
        Cmd::Fit(a) => commands::fit(a),
        Cmd::FitEm(a) => commands::fit_em(a),
        Cmd::Select(a) => commands::select(a),
        Cmd::Residuals(a) => commands::residuals(a),
        Cmd::Endogeneity(a) => commands::endogeneity(a),
        Cmd::Predict(a) => commands::predict(a),
        Cmd::Replicate(a) => commands::replicate(a),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{}", e.record());
        std::process::exit(e.code);
    }
}
