//! `hrv`: command-line driver for hidden regular variation analyses.
//!
//! Exit codes: 0 success, 2 a hypothesis or precondition fails, 3 usage or
//! configuration error, 1 I/O failure.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(
    name = "hrv",
    version,
    about = "Hidden regular variation of diagonal stochastic recurrence equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model or walk configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed of the configuration file (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "hrv-out")]
    pub out: PathBuf,
    /// Worker threads (0 = all available). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tail indices, assumption checks, the level set and the critical point.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo draws for the assumption checks.
        #[arg(long, default_value_t = 200_000)]
        n: usize,
    },
    /// Stationary samples as CSV (and optionally the binary cache).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        burn_in: Option<usize>,
        /// Also write `samples.hrvb`.
        #[arg(long)]
        cache: bool,
    },
    /// Marginal, joint or hidden-regular-variation tail scans.
    TailScan(TailScanArgs),
    /// Importance-sampled joint exceedance and the walk-box comparison.
    Exceedance {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Offset of the walk-box step from `n0`.
        #[arg(long, default_value_t = 0)]
        ell: usize,
    },
    /// Renewal-measure checks for a `GaussianWalk` configuration.
    RenewalCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "100:1000:2,log")]
        t_grid: String,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
    },
    /// Standing assumptions (A1)-(A6).
    CheckAssumptions {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200_000)]
        n: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScanMode {
    Marginal,
    Joint,
    Hrv,
}

#[derive(Args, Debug)]
pub struct TailScanArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: ScanMode,
    /// `start:stop:points` with an optional `,log` suffix.
    #[arg(long, default_value = "10:1000:7,log")]
    pub t_grid: String,
    /// Stationary samples to draw.
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Exponent pair for joint mode, e.g. `0.3,0.3`.
    #[arg(long, value_delimiter = ',')]
    pub xi: Option<Vec<f64>>,
    /// Importance-sampling paths when hrv mode falls back to the tilted walk.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// A prior `analyze` report (or its output directory) supplying xi*.
    #[arg(long)]
    pub analysis: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Precondition(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Analyze { common, n } => commands::analyze(&common, n),
        Command::Simulate {
            common,
            n,
            burn_in,
            cache,
        } => commands::simulate(&common, n, burn_in, cache),
        Command::TailScan(args) => commands::tail_scan(&args),
        Command::Exceedance {
            common,
            t,
            eps,
            paths,
            ell,
        } => commands::exceedance(&common, t, eps, paths, ell),
        Command::RenewalCheck { common, t_grid, paths } => commands::renewal_check(&common, &t_grid, paths),
        Command::CheckAssumptions { common, n } => commands::check_assumptions(&common, n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
