use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use svrpg::harness::{self, check::CheckOptions, presets, RunConfig};

/// Variance-reduced policy gradient experiments.
#[derive(Parser)]
#[command(name = "svrpg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a configuration and write metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Mini-batch sweep over paired B and step-size lists.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "B", value_delimiter = ',', required = true)]
        b: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        eta: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the self-check suite and print the JSON report.
    Check {
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert run directories into one tidy CSV for plotting.
    PlotData {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Print a built-in configuration as JSON.
    Preset { name: String },
}

fn load(path: &PathBuf, output_dir: Option<PathBuf>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, seed, budget, output_dir } => {
            let mut cfg = load(&config, output_dir)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            let metrics = harness::run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&metrics.summary)?);
            eprintln!("wrote {}", metrics.output_dir.display());
        }
        Command::Sweep { config, b, eta, output_dir } => {
            let cfg = load(&config, output_dir)?;
            let report = harness::sweep_minibatch(&cfg, &b, &eta)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Check { out } => {
            let report = harness::check_suite(CheckOptions::default())?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                std::fs::write(&path, &text)?;
            }
            println!("{text}");
            if !report.passed {
                eprintln!("failed checks: {}", report.failures().join(", "));
            }
            return Ok(report.passed);
        }
        Command::PlotData { inputs, out, window } => {
            let n = harness::emit_plot_data(&inputs, &out, window)?;
            eprintln!("wrote {n} rows to {}", out.display());
        }
        Command::Preset { name } => {
            let Some((_, cfg)) = presets::all().into_iter().find(|(n, _)| *n == name) else {
                let names: Vec<_> = presets::all().into_iter().map(|(n, _)| n).collect();
                bail!("unknown preset {name:?}; available: {}", names.join(", "));
            };
            println!("{}", cfg.to_json()?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
