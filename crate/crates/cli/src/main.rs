//! `mdiverify`: command-line front end for the MDI memory-verification simulator.

mod channel_spec;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdi_core::tomography::BasisLeak;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    /// Classifies a library error raised while computing from configured values.
    pub fn from_core(e: mdi_core::Error) -> Self {
        use mdi_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::UndefinedSnr => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }

    /// Any library error raised while reading an input file is a data error.
    pub fn data(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mdiverify", version, about = "Measurement-device-independent verification of quantum memories")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Parallel workers for round loops. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theory curve of the witness against storage time.
    Predict {
        /// Comma-separated storage times in microseconds.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        times: Option<Vec<f64>>,
        /// Include visibility-derived BSM noise.
        #[arg(long)]
        bsm_noise: bool,
        #[arg(long)]
        lambda: Option<f64>,
        /// Process-matrix files with storage times; emits the simulated curve instead.
        #[arg(long, value_name = "FILE")]
        chi: Vec<PathBuf>,
    },
    /// Play the signaling game against a channel and tally the outcomes.
    Simulate {
        /// depolarizing:<p> | chi:<file> | intercept:<basis>[+<basis>...]
        #[arg(long)]
        channel: String,
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Per-photon survival probability.
        #[arg(long)]
        detection_efficiency: Option<f64>,
        /// Use a parametric bootstrap with this many resamples for the error bar.
        #[arg(long, value_name = "N")]
        bootstrap: Option<u32>,
    },
    /// Estimate the witness from a tally file.
    Witness {
        tally: PathBuf,
        #[arg(long, value_name = "N")]
        bootstrap: Option<u32>,
    },
    /// Process tomography of a channel.
    Tomography {
        #[arg(long)]
        channel: String,
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Faked-state adversary against tomography and against the MDI game.
    Attack {
        #[arg(long)]
        leak: Option<BasisLeak>,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
