use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use idg_cli::commands::output_dir;
use idg_cli::{cmd_grid, cmd_metrics, cmd_shapley, cmd_simulate, cmd_synth, RunConfig};
use idg_core::{DataFormat, SyntheticSpec};

#[derive(Parser)]
#[command(name = "idg", version, about = "Information disclosure game simulator")]
struct Cli {
    /// Worker threads for parallel runs.
    #[arg(long, global = true, env = "IDG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one DU policy and strategy over every seed.
    Simulate(RunArgs),
    /// Sweep the config's grid block.
    Grid(RunArgs),
    /// Exact kNN Shapley values and the Shapley-vs-random acquisition curve.
    Shapley {
        #[command(flatten)]
        run: RunArgs,
        /// Value these centers, one row per training point in split order.
        #[arg(long)]
        centers: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a JSON generator spec.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Destination dataset file.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "binary")]
        format: DataFormat,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Recompute Gini and Spearman from a run directory.
    Metrics {
        /// Directory written by `simulate` or `grid`.
        #[arg(long)]
        runs: PathBuf,
        /// Where to write metrics.json; defaults to the runs directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run this single seed instead of the config's seed list.
    #[arg(long)]
    seed_override: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = RunConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed_override {
            config.seeds = vec![seed];
        }
        let out = output_dir(&config, self.output.as_deref())?;
        Ok((config, out))
    }
}

fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate(args) => {
            let (config, out) = args.load()?;
            let r = cmd_simulate(&config, &out)?;
            println!(
                "success_rate {} mean_spend {} mean_iterations {} -> {}",
                r.success_rate,
                r.total_spend,
                r.mean_iterations,
                out.display()
            );
        }
        Command::Grid(args) => {
            let (config, out) = args.load()?;
            let results = cmd_grid(&config, &out)?;
            println!(
                "{} cells -> {}",
                results.len(),
                out.join("grid_results.json").display()
            );
        }
        Command::Shapley { run, centers } => {
            let (config, out) = run.load()?;
            let values = cmd_shapley(&config, &out, centers.as_deref())?;
            println!("{} values -> {}", values.len(), out.display());
        }
        Command::Synth {
            config,
            output,
            format,
            seed_override,
        } => {
            let mut spec = read_spec(&config)?;
            if let Some(seed) = seed_override {
                spec.seed = seed;
            }
            let data = cmd_synth(&spec, &output, format)?;
            println!(
                "{} rows, d={} -> {}",
                data.len(),
                data.dim(),
                output.display()
            );
        }
        Command::Metrics { runs, output } => {
            let out = output.unwrap_or_else(|| runs.clone());
            let m = cmd_metrics(&runs, &out)?;
            println!("{} runs -> {}", m.len(), out.join("metrics.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
