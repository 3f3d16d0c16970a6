//! `currdyn`: batch experiments on outer automorphisms of free groups.
//!
//! Every subcommand writes a JSON report (to stdout, or `<dir>/<command>.json`
//! with `--out`), and orbit-style commands also write a CSV with one row per
//! orbit step. Exit codes: 0 the certificate holds, 2 it fails, 3 undecided or
//! capped, 1 for bad input.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use currdyn_core::dynamics::{DEFAULT_DELTA, DEFAULT_DEPTH, DEFAULT_EPSILON, DEFAULT_ORBIT_BUDGET};

#[derive(Parser, Debug)]
#[command(
    name = "currdyn",
    version,
    about = "Free-group automorphisms acting on finite-order currents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Strata, PF eigenvalues, cancellation constant, Nielsen paths.
    Analyze { input: PathBuf },
    /// Attracting simplex, and the repelling one when an inverse is given.
    Simplex { input: PathBuf },
    /// Forward and backward orbits of sampled circuits.
    Orbit {
        input: PathBuf,
        /// Also record goodness at every step (slow on long circuits).
        #[arg(long)]
        goodness: bool,
    },
    /// Atoroidal scan, then north-south convergence of sampled circuits.
    Ns { input: PathBuf },
    /// Independence and flaring exponents for a pair of maps.
    Flare { first: PathBuf, second: PathBuf },
    /// Bounded search for periodic conjugacy classes.
    Scan { input: PathBuf },
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Order L of the frequency vectors.
    #[arg(long, global = true, default_value_t = 3, value_parser = positive)]
    order: usize,
    /// Orbit steps.
    #[arg(long, global = true, default_value_t = 25, value_parser = positive)]
    nmax: usize,
    /// Goodness threshold of the dichotomy.
    #[arg(long, global = true, default_value_t = DEFAULT_DELTA, value_parser = unit_interval)]
    delta: f64,
    /// Distance at which an orbit counts as converged.
    #[arg(long, global = true, default_value_t = DEFAULT_EPSILON, value_parser = unit_interval)]
    epsilon: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of sampled circuits.
    #[arg(long, global = true, default_value_t = 100, value_parser = positive)]
    samples: usize,
    /// Length bound: scanned circuits for `scan`/`ns` (default 8), Nielsen
    /// paths for `analyze` (default 6), sampled circuits otherwise (default 20).
    #[arg(long, global = true, value_parser = positive)]
    max_len: Option<usize>,
    /// Largest power tried by the atoroidal scan.
    #[arg(long, global = true, default_value_t = 6, value_parser = positive)]
    max_pow: usize,
    /// Iterations used to decide which cuts of a circuit are stable.
    #[arg(long, global = true, default_value_t = DEFAULT_DEPTH, value_parser = positive)]
    depth: usize,
    /// Longest circuit ever materialized.
    #[arg(long, global = true, env = "CURRDYN_BUDGET", default_value_t = DEFAULT_ORBIT_BUDGET, value_parser = positive)]
    budget: usize,
    /// Directory for JSON and CSV artifacts; JSON goes to stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

/// Resolved parameters, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub order: usize,
    pub n_max: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub samples: usize,
    pub sample_len: usize,
    pub scan_len: usize,
    pub nielsen_len: usize,
    pub max_pow: usize,
    pub depth: usize,
    pub budget: usize,
    pub growth: f64,
    pub tolerance: f64,
    pub exponent_cap: usize,
}

impl From<&Flags> for ExperimentConfig {
    fn from(f: &Flags) -> Self {
        ExperimentConfig {
            order: f.order,
            n_max: f.nmax,
            delta: f.delta,
            epsilon: f.epsilon,
            seed: f.seed,
            samples: f.samples,
            sample_len: f.max_len.unwrap_or(20),
            scan_len: f.max_len.unwrap_or(8),
            nielsen_len: f.max_len.unwrap_or(6),
            max_pow: f.max_pow,
            depth: f.depth,
            budget: f.budget,
            growth: currdyn_core::dynamics::DEFAULT_GROWTH,
            tolerance: currdyn_core::dynamics::DEFAULT_TOL,
            exponent_cap: 64,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // keep 2 and 3 for certificate outcomes
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = ExperimentConfig::from(&cli.flags);
    let sink = match report::Sink::new(cli.flags.out.clone()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let run = match &cli.command {
        Command::Analyze { input } => commands::analyze(input, &cfg, &sink),
        Command::Simplex { input } => commands::simplex(input, &cfg, &sink),
        Command::Orbit { input, goodness } => commands::orbit(input, *goodness, &cfg, &sink),
        Command::Ns { input } => commands::ns(input, &cfg, &sink),
        Command::Flare { first, second } => commands::flare(first, second, &cfg, &sink),
        Command::Scan { input } => commands::scan(input, &cfg, &sink),
    };
    match run {
        Ok(v) => ExitCode::from(v.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
