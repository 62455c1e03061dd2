use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphweyl_cli::{configure_threads, run, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "graphweyl", version, about = "Quantized interval map experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write P_n and U_n with provenance sidecars.
    Build(Common),
    /// Pointwise Weyl sums against the envelope, with coordinate histograms.
    Weyl(Common),
    /// Egorov defects and quantum variance in bins.
    Qe(Common),
    /// Randomized quantizations and their properties.
    Perturb(Common),
    /// Exact algebra of the doubling quantization at n = 2^K.
    Doubling2k(Common),
    /// The failing coordinate of the doubling map.
    Failcoord(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Build(c) => ("build", c),
        Command::Weyl(c) => ("weyl", c),
        Command::Qe(c) => ("qe", c),
        Command::Perturb(c) => ("perturb", c),
        Command::Doubling2k(c) => ("doubling2k", c),
        Command::Failcoord(c) => ("failcoord", c),
    };
    configure_threads();
    let result = (|| -> Result<_, CliError> {
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if let Some(o) = &common.out {
            cfg.out = o.clone();
        }
        run(name, &cfg)
    })();
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("{}: {} ({})", name, if outcome.pass { "pass" } else { "FAIL" }, outcome.report_path.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
