//! `spotdress`: batch front end for settling curves, computing curve
//! features, generating synthetic markets, backtesting and comparing
//! forecast scores.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spotdress::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_HISTORY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "spotdress", version, about = "Probabilistic day-ahead price forecasts from bid/ask curves")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "SPOTDRESS_CONFIG")]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set model.knn=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Random seed; replaces the configured seed of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    /// Accept curve prices outside [-500, 3000].
    #[arg(long, global = true)]
    pub allow_out_of_range_prices: bool,

    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Settle every (date, hour) with both curves.
    Settle {
        #[arg(long)]
        curves: PathBuf,
        /// Output CSV `date,hour,price_eur,volume_mwh`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Curve features, volume residuals and the neighbour diagnostic curve.
    Features {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        forecasts: PathBuf,
        /// Settled volumes; by default they come from settling the curves.
        #[arg(long)]
        observed: Option<PathBuf>,
        /// Feature CSV; `<stem>_residuals.csv` and `<stem>_diagnostic.csv`
        /// are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling backtest of the bid/ask model and both benchmarks.
    Backtest {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        forecasts: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated dates to leave out of scoring.
        #[arg(long, value_delimiter = ',')]
        exclude_dates: Vec<NaiveDate>,
        #[arg(long)]
        first_day: Option<NaiveDate>,
        #[arg(long)]
        last_day: Option<NaiveDate>,
    },
    /// Generate a synthetic market.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of days; replaces `synth.n_days`.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Paired permutation test on two models' scores.
    Permtest {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        model_a: String,
        #[arg(long)]
        model_b: String,
        #[arg(long, value_enum, default_value_t = Metric::Crps)]
        metric: Metric,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        /// Also write the result lines to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a run recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Crps,
    Qs10,
    Qs90,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::InsufficientHistory { .. } | Error::WarmUp { .. } => EXIT_HISTORY,
                Error::InvalidParameter(_) | Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::execute(cli, &argv[1..], None) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
