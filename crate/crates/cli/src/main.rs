//! `decoupler`: runs the decoupling experiments and validators from JSON
//! configs and writes CSV/JSON results.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
//! 3 the run completed but a checked inequality or trend was violated.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigError;
use decoupler_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "decoupler", version, about = "Decoupling and capacity experiments for quantum erasure channels")]
struct Cli {
    /// Worker threads for per-sample parallelism.
    #[arg(long, global = true, env = "DECOUPLER_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Io {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file stem; defaults to the command name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Qudit scrambling through an erasure channel.
    DecoupleDv {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        local_dim: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        erased_count: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Squeezed pairs scrambled by passive optics through an erasure channel.
    DecoupleCv {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Squeezing parameter.
        #[arg(long, conflicts_with = "n_bar")]
        r: Option<f64>,
        /// Mean photon number per input mode, `sinh²r`.
        #[arg(long)]
        n_bar: Option<f64>,
        /// Total photon cap of the simulated register.
        #[arg(long)]
        max_photons: Option<u32>,
        /// Typical-set half-width in bits per mode.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        erased_count: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// `empirical` or `analytic_thermal`.
        #[arg(long)]
        marginal_mode: Option<String>,
        #[arg(long)]
        calibration_samples: Option<usize>,
    },
    /// Analytic twirls and Haar moments against Monte-Carlo averages.
    TwirlCheck {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Thermal light spread over modes by random passive circuits.
    PassiveThermal {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        n_bar: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_modes: Option<Vec<usize>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cutoff: Option<u32>,
    },
    /// Single-mode marginals of fixed-photon-number shells.
    ThermalReduction {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_delimiter = ',')]
        n_modes: Option<Vec<usize>>,
        #[arg(long)]
        photons_per_mode: Option<u32>,
    },
    /// Thermal versus uniform truncated encodings.
    TruncatedCompare {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_delimiter = ',')]
        n_c_values: Option<Vec<usize>>,
    },
    /// Prints an erasure-channel capacity: `--d` for qudits, `--r0` for modes.
    Capacity {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Erasure probability.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        r0: Option<f64>,
    },
    /// Exact decoder on a random decoupled state, or on GHZ with `--ghz`.
    DecodeDemo {
        #[command(flatten)]
        io: Io,
        /// `dR,dB,dE`.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        ghz: bool,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::InvalidParameter { .. }
            | CoreError::EmptyTypicalSet { .. }
            | CoreError::TooLarge { .. }
            | CoreError::InconsistentSqueezing { .. },
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(commands::Verdict::Held) => ExitCode::SUCCESS,
        Ok(commands::Verdict::Violated(what)) => {
            eprintln!("inequality violated: {what}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
