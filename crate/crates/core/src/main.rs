use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use armsim::geometry_sets::invariant_grid;
use armsim::sim::{batch, emit_plots_from_file, parse_seeds, run, ControllerKind};
use armsim::{Scenario, SimError};

#[derive(Parser)]
#[command(name = "armsim", version, about = "Robust MPC arm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write trajectory.csv, obstacles.csv and metrics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "rmpc")]
        controller: ControllerKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several controllers over a seed range and aggregate the metrics.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rmpc,baseline")]
        controllers: Vec<ControllerKind>,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate robust feasibility on a regular joint-space grid.
    VerifyInvariant {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a trajectory log into plot-ready CSV files.
    EmitPlots {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &SimError) -> ExitCode {
    match e {
        SimError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn execute(cmd: Command) -> Result<(), SimError> {
    match cmd {
        Command::Run {
            scenario,
            controller,
            seed,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let res = run(&sc, controller, seed)?;
            res.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&res.metrics)?);
        }
        Command::Batch {
            scenario,
            controllers,
            seeds,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let seeds = parse_seeds(&seeds).map_err(|e| SimError::Config(armsim::ConfigError::Invalid(e)))?;
            let report = batch(&sc, &controllers, &seeds)?;
            report.save(&out)?;
            for s in &report.summary {
                let ct = s.fields.get("completion_time");
                println!(
                    "{:<9} runs={} failures={} completion_median={} win_rate={}",
                    s.controller,
                    s.runs,
                    s.failures,
                    ct.map(|c| format!("{:.2}", c.median)).unwrap_or_else(|| "-".into()),
                    s.win_rate.map(|w| format!("{w:.2}")).unwrap_or_else(|| "-".into()),
                );
            }
        }
        Command::VerifyInvariant { scenario, grid, out } => {
            let sc = Scenario::load(&scenario)?;
            let g = invariant_grid(&sc, grid)?;
            g.save_csv(&out)?;
            println!("{} cells, member fraction {:.3}", g.cells.len(), g.member_fraction());
        }
        Command::EmitPlots { log, out } => emit_plots_from_file(&log, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
