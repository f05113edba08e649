use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splineop::error::{Error, Result};
use splineop::harness::{self, ExperimentConfig, Run};

#[derive(Parser)]
#[command(name = "splineop", version, about = "B-spline neural operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML or JSON). `show` also accepts a dataset or checkpoint file.
    #[arg(long)]
    config: PathBuf,
    /// gen-data: sampling seed. train: train only this seed. Other commands: use this seed's checkpoint.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: runs/<config name>]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, fit and write the training dataset.
    GenData(Common),
    /// Train one model per seed.
    Train(Common),
    /// Error versus radius on fresh test initial conditions.
    Eval(Common),
    /// Rotation equivariance sweep.
    RotEval(Common),
    /// Timing table.
    Bench(Common),
    /// Summarize a dataset, checkpoint or experiment directory.
    Show(Common),
}

fn load_run(args: &Common, apply_seed: impl FnOnce(&mut ExperimentConfig, u64)) -> Result<Run> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        apply_seed(&mut config, seed);
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    Run::new(config, out)
}

fn select_checkpoint(c: &mut ExperimentConfig, seed: u64) {
    c.training.seeds = vec![seed];
    c.evaluation.checkpoint = None;
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData(a) => {
            let run = load_run(&a, |c, s| c.sampling.seed = s)?;
            json(&harness::gen_data(&run)?)
        }
        Command::Train(a) => {
            let run = load_run(&a, |c, s| c.training.seeds = vec![s])?;
            json(&harness::train_models(&run)?)
        }
        Command::Eval(a) => {
            let run = load_run(&a, select_checkpoint)?;
            json(&harness::eval(&run)?)
        }
        Command::RotEval(a) => {
            let run = load_run(&a, select_checkpoint)?;
            json(&harness::rot_eval(&run)?)
        }
        Command::Bench(a) => {
            let run = load_run(&a, select_checkpoint)?;
            json(&harness::bench(&run)?)
        }
        Command::Show(a) => match harness::show(&a.config, None) {
            Err(Error::Config(_)) => {
                let run = load_run(&a, select_checkpoint)?;
                harness::show(&a.config, Some(&run))
            }
            other => other,
        },
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("splineop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
