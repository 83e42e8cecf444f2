use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use frd_cli::commands;
use frd_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "frd",
    about = "Finite-range multiscale decomposition of lattice Green's functions",
    version
)]
struct Cli {
    /// Path to a `key = value` configuration file (defaults apply if absent).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the cache directory from the config.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Worker threads for the parallel sections (Dirichlet solves).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Permit d < 3 (the decomposition theory assumes d >= 3).
    #[arg(long, global = true)]
    override_dimension_check: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the multiscale decomposition and write per-scale artifacts.
    Decompose {
        /// Output directory for kernels, symbols and residual tables.
        #[arg(long, default_value = "frd-out")]
        out: PathBuf,
    },
    /// Check structural invariants (range, positivity, masses, bounds) of
    /// decomposition artifacts; nonzero exit on any failure.
    Verify {
        #[arg(long, default_value = "frd-out")]
        out: PathBuf,
    },
    /// Measure convergence rates against the proxy scale (CSV + JSON).
    Rates {
        #[arg(long, default_value = "frd-out")]
        out: PathBuf,
    },
    /// Lévy covariance rates, normalization oracle, and reconstruction.
    Levy {
        #[arg(long, default_value = "frd-out")]
        out: PathBuf,
    },
    /// Dump a binary artifact as CSV.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().ok();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = dir.clone();
    }
    let low_dim = cli.override_dimension_check;
    match cli.cmd {
        Cmd::Decompose { out } => commands::cmd_decompose(&cfg, low_dim, &out),
        Cmd::Verify { out } => {
            let ok = commands::cmd_verify(&cfg, low_dim, &out)?;
            if !ok {
                std::process::exit(1);
            }
            Ok(())
        }
        Cmd::Rates { out } => commands::cmd_rates(&cfg, low_dim, &out),
        Cmd::Levy { out } => commands::cmd_levy(&cfg, low_dim, &out),
        Cmd::Export { input, output } => commands::cmd_export(&input, &output),
    }
}
