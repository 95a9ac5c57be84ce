use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use kidesign::kim::DEFAULT_G;
use kidesign::Boundary;
use serde::Serialize;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid command line or config file
  3  invalid parameters (rejected by the numerics)
  4  infeasible size (the error record carries the memory estimate)
  5  numerical failure (ill-conditioned Weingarten table, degenerate sums)
  6  I/O failure
  7  input file does not match the expected CSV schema

On failure a one-line JSON error record is written to stderr.";

#[derive(Parser, Debug)]
#[command(name = "kidesign", version, about = "Projected-ensemble moments of the self-dual kicked Ising chain")]
#[command(args_override_self = true, after_help = EXIT_CODES)]
pub struct Cli {
    /// Flat `key = value` file mirroring the long flags. Flags given on the
    /// command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "KIDESIGN_THREADS")]
    pub threads: Option<usize>,

    /// Output file. Without it results go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// CSV, plus a JSON run record next to `--out`
    Csv,
    /// JSON run record only
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Pbc,
    Obc,
}

impl From<Bc> for Boundary {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Pbc => Boundary::Periodic,
            Bc::Obc => Boundary::Open,
        }
    }
}

/// Integer that may be written in scientific notation, e.g. `1e6`.
fn count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x < 0.0 || x.fract() != 0.0 || x > 1e18 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(x as u64)
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Weingarten table Wg(σ, d) for S_m
    Weingarten {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: f64,
    },
    /// Exact finite-chain projected ensemble
    Exact {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        na: usize,
        /// Floquet times, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "pbc")]
        bc: Vec<Bc>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_G)]
        g: f64,
    },
    /// Replica sums ρ^(k,n) in the infinite-bath limit and the fit to n = 1 − k
    Replica {
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Largest replica index (default 6 − k)
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "pbc,obc")]
        bc: Vec<Bc>,
        #[arg(long, default_value_t = 2)]
        na: usize,
        #[arg(long, default_value_t = DEFAULT_G)]
        g: f64,
    },
    /// Haar Monte Carlo estimate of ρ^(k) with convergence checkpoints
    Mc {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, value_enum)]
        bc: Bc,
        #[arg(long, default_value_t = 2)]
        na: usize,
        #[arg(long, value_parser = count)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_parser = count, default_value = "4096")]
        batch: u64,
        /// Checkpoints per decade from 10^3
        #[arg(long, default_value_t = 1)]
        per_decade: usize,
        /// Estimate the integer replica ρ^(k,n) instead of ρ^(k)
        #[arg(long)]
        replica_n: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_G)]
        g: f64,
    },
    /// Decay rates v from a CSV with columns k, t, bc and a value column
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        /// Value column (default: extrapolated_norm, then delta_k)
        #[arg(long)]
        column: Option<String>,
    },
    /// Replica sweep, extrapolation, MC spot checks and rate fits
    Figure3 {
        #[arg(long, default_value_t = 2)]
        na: usize,
        #[arg(long, default_value_t = 4)]
        kmax: usize,
        #[arg(long, default_value_t = 2)]
        tmin: usize,
        #[arg(long, default_value_t = 5)]
        tmax: usize,
        /// Samples per MC spot check (0 disables them)
        #[arg(long, value_parser = count, default_value = "100000")]
        mc_samples: u64,
        /// Largest k with MC spot checks
        #[arg(long, default_value_t = 2)]
        mc_kmax: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_G)]
        g: f64,
    },
    /// SVG line plot of a figure3 CSV
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Binary dump of the W tensor
    DumpW {
        #[arg(long, default_value_t = 2)]
        na: usize,
        #[arg(long, default_value_t = DEFAULT_G)]
        g: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Weingarten { .. } => "weingarten",
            Command::Exact { .. } => "exact",
            Command::Replica { .. } => "replica",
            Command::Mc { .. } => "mc",
            Command::Rates { .. } => "rates",
            Command::Figure3 { .. } => "figure3",
            Command::Plot { .. } => "plot",
            Command::DumpW { .. } => "dump-w",
        }
    }
}
