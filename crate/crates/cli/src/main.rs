use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use batmobile::config::{load_config, ScenarioConfig};
use batmobile::experiment::{self, load_sweep, RunOptions};
use batmobile::routing::Protocol;
use batmobile::sim::Simulation;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "batmobile-sim", version, about = "Predictive UAV mesh routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Scenario (or sweep spec) TOML file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds, overriding the file.
    #[arg(long)]
    seeds: Option<usize>,
    /// Output directory.
    #[arg(long, env = "BATMOBILE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one seed; writes the result as JSON and the
    /// PDR series as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed; the scenario's base seed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump agent positions at every mobility update.
        #[arg(long)]
        trajectory: bool,
    },
    /// Sweep one scenario parameter over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Compare protocols under both channel models.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [Protocol::Batmobile, Protocol::BatmanBaseline])]
        protocols: Vec<Protocol>,
    },
}

fn scenario(common: &Common) -> Result<ScenarioConfig> {
    match &common.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn options(common: &Common) -> RunOptions {
    RunOptions { jobs: common.jobs, out_dir: Some(common.out.clone()) }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, seed, trajectory } => {
            let cfg = scenario(&common)?;
            let seed = seed.unwrap_or(cfg.base_seed);
            let mut sim = Simulation::new(&cfg, seed)?;
            if trajectory {
                sim.record_trajectories();
            }
            let result = sim.run_to_end();
            if trajectory {
                write(&common.out, &format!("trajectory-{seed}.csv"), &sim.trajectory_csv())?;
            }
            write(&common.out, &format!("run-{seed}.json"), &result.to_json())?;
            write(&common.out, &format!("run-{seed}-pdr.csv"), &result.series_csv())?;
            eprintln!("mean_pdr {:.4} ({} of {} packets)", result.mean_pdr, result.packets_delivered, result.packets_sent);
        }
        Command::Sweep { common } => {
            let Some(path) = &common.config else {
                bail!("sweep needs --config pointing at a sweep spec");
            };
            let mut spec = load_sweep(path).with_context(|| format!("loading {}", path.display()))?;
            if common.seeds.is_some() {
                spec.seeds = common.seeds;
            }
            let out = experiment::run_sweep(&spec, &options(&common))?;
            match common.format {
                Format::Csv => write(&common.out, "sweep.csv", &out.to_csv())?,
                Format::Json => write(&common.out, "sweep.json", &out.to_json())?,
            }
        }
        Command::Compare { common, protocols } => {
            let cfg = scenario(&common)?;
            let seeds = common.seeds.unwrap_or(cfg.seeds);
            let cmp = experiment::compare_protocols(&cfg, &protocols, seeds, &options(&common))?;
            match common.format {
                Format::Csv => {
                    write(&common.out, "compare.csv", &cmp.to_csv())?;
                    write(&common.out, "channel_delta.csv", &cmp.deltas_csv())?;
                }
                Format::Json => write(&common.out, "compare.json", &cmp.to_json())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
