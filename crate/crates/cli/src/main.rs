//! Command-line runner for threshold sweeps.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cloudcluster::experiment::{
    csv_string, emit_csv, run_experiment, Curve, ExperimentConfig, PAPER_SCALE_SENSORS,
};

#[derive(Parser, Debug)]
#[command(name = "cloudcluster", version, about = "Cluster/fusion-center detection sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a sweep and write the curve rows as CSV
    Run(RunArgs),
    /// Print the default configuration as TOML
    PrintConfig {
        /// Use 500 sensors instead of the desk-scale 60
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// TOML experiment file; defaults to the built-in desk-scale setup
    #[arg(long)]
    config: Option<PathBuf>,

    /// CSV destination; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Largest cluster evaluated exactly
    #[arg(long)]
    cluster_cap: Option<usize>,

    /// Largest cluster count evaluated exactly at the fusion center
    #[arg(long)]
    fc_cap: Option<usize>,

    /// Comma-separated subset of: exact, majority, bennett_optimized,
    /// bennett_loss_homogeneous, bennett_loss_heterogeneous
    #[arg(long, value_delimiter = ',')]
    curves: Option<Vec<String>>,

    /// Simulated trials per row for the mc_loss column; 0 disables it
    #[arg(long)]
    mc_trials: Option<u64>,

    /// Use 500 sensors
    #[arg(long)]
    paper_scale: bool,
}

fn default_config(paper_scale: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    if paper_scale {
        cfg.total_sensors = PAPER_SCALE_SENSORS;
    }
    cfg
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => default_config(false),
    };
    if args.paper_scale {
        cfg.total_sensors = PAPER_SCALE_SENSORS;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(c) = args.cluster_cap {
        cfg.caps.cluster = c;
    }
    if let Some(c) = args.fc_cap {
        cfg.caps.fc = c;
    }
    if let Some(names) = &args.curves {
        cfg.curves = names
            .iter()
            .map(|n| Curve::parse(n.trim()))
            .collect::<cloudcluster::Result<Vec<_>>>()?;
    }
    if let Some(t) = args.mc_trials {
        cfg.mc_trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let points = run_experiment(&cfg)?;
    for p in points.iter().filter(|p| p.method.is_none()) {
        eprintln!(
            "warning: {} does not divide {} sensors; {} row skipped",
            p.x,
            cfg.total_sensors,
            p.curve.as_str()
        );
    }
    match &args.output {
        Some(path) => emit_csv(&points, path).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", csv_string(&points)),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::PrintConfig { paper_scale } => {
            print!("{}", default_config(paper_scale).to_toml_string());
            Ok(())
        }
    }
}
