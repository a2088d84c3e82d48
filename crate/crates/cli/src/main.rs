use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "odrelease", version, about = "Bias repair and private release of trip histograms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory [default: the config's `out`, else ./out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Args, Debug, Clone)]
pub struct HistogramInput {
    /// Schema JSON.
    #[arg(long)]
    pub schema: PathBuf,

    /// Histogram CSV.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bucketize raw taxi or bike trips into a histogram.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic ride-hailing histogram.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Remove the X -> Y | Z dependency from a histogram.
    Repair {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hist: HistogramInput,
    },
    /// Differentially private release of a histogram.
    Privatize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hist: HistogramInput,
        /// Exit with status 4 when nothing is released.
        #[arg(long)]
        fail_on_empty: bool,
    },
    /// Full pipeline: privatize and repair in the configured order, then measure.
    Release {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 when nothing is released.
        #[arg(long)]
        fail_on_empty: bool,
    },
    /// Distances between two histograms, with the reference's bootstrap band.
    Measure {
        #[command(flatten)]
        common: Common,
        /// Schema JSON shared by both histograms.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        other: PathBuf,
        /// Bootstrap replicates; 0 skips the band.
        #[arg(long, default_value_t = 200)]
        replicates: usize,
    },
    /// Release over a grid of epsilon and rho values.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_EMPTY: u8 = 4;

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl From<odrelease::Error> for Failure {
    fn from(e: odrelease::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

pub enum Status {
    Ok,
    EmptyRelease,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { common } => commands::ingest(&common),
        Command::Synth { common } => commands::synth(&common),
        Command::Repair { common, hist } => commands::repair(&common, &hist),
        Command::Privatize {
            common,
            hist,
            fail_on_empty,
        } => commands::privatize(&common, &hist, fail_on_empty),
        Command::Release { common, fail_on_empty } => commands::release(&common, fail_on_empty),
        Command::Measure {
            common,
            schema,
            reference,
            other,
            replicates,
        } => commands::measure(&common, &schema, &reference, &other, replicates),
        Command::Sweep { common } => commands::sweep(&common),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::EmptyRelease) => ExitCode::from(EXIT_EMPTY),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Data(e)) => {
            eprintln!("data error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
