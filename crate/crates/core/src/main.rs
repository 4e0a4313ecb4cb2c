use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use owc_alloc::cli::{cmd_compare, cmd_heatmap, cmd_solve, cmd_train, RunOptions, SteeringChoice};
use owc_alloc::config::{load_config, ScenarioConfig};
use owc_alloc::presets;

#[derive(Parser)]
#[command(
    name = "owc-alloc",
    version,
    about = "User-to-access-point allocation for VCSEL optical wireless rooms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact optimum by exhaustive search.
    Solve(Common),
    /// Tabular Q-learning, checked against the exact optimum.
    Train(Common),
    /// Exact and Q-learning allocations side by side.
    Compare(Common),
    /// Best single-AP SINR over the receiving plane.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_parser = presets::PRESET_NAMES)]
    preset: Option<String>,
    #[arg(long, default_value = "both")]
    steering: SteeringChoice,
    /// Seed for Q-learning exploration (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, RunOptions)> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => presets::preset(name)?,
            (None, None) => unreachable!("clap requires a source"),
        };
        let opts = RunOptions {
            out_dir: self.out.clone(),
            steering: self.steering,
            seed: self.seed,
        };
        Ok((cfg, opts))
    }
}

fn on_off(steering: bool) -> &'static str {
    if steering {
        "on"
    } else {
        "off"
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(common) => {
            let (cfg, opts) = common.load()?;
            for o in cmd_solve(&cfg, &opts)? {
                let s = &o.solution;
                println!(
                    "{} steering={} {} sum={:.6} ({:.3} dB) meets_threshold={} feasible={}/{} ties={}",
                    cfg.name,
                    on_off(o.steering),
                    s.assignment,
                    s.objective_linear,
                    s.report.sum_sinr_db,
                    s.meets_threshold,
                    s.n_feasible,
                    s.n_enumerated,
                    s.n_ties
                );
            }
        }
        Command::Train(common) => {
            let (cfg, opts) = common.load()?;
            for o in cmd_train(&cfg, &opts)? {
                println!(
                    "{} steering={} {} sum={:.6} episodes={} converged={} equals_exact={}",
                    cfg.name,
                    on_off(o.steering),
                    o.greedy,
                    o.report.greedy_objective_linear,
                    o.report.episodes_run,
                    o.report.converged,
                    o.matches_exact
                );
            }
        }
        Command::Compare(common) => {
            let (cfg, opts) = common.load()?;
            let rows = cmd_compare(&cfg, &opts)?;
            println!(
                "{}: {} rows written to {}",
                cfg.name,
                rows.len(),
                opts.out_dir.display()
            );
        }
        Command::Heatmap { common, grid_step } => {
            let (cfg, opts) = common.load()?;
            for (steering, points) in cmd_heatmap(&cfg, grid_step, &opts)? {
                println!(
                    "{} steering={} {} grid points",
                    cfg.name,
                    on_off(steering),
                    points.len()
                );
            }
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
