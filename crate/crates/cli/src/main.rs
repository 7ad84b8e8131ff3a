use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanest_core::harness::{
    figure_config, generate_seed, run_experiment, train_seed, ExperimentConfig, Figure, NamedModels, Profile, RunOptions,
};
use chanest_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chanest", version, about = "Channel estimation experiments: generate data, train, evaluate, reproduce figures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// First seed; the run uses consecutive seeds from here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "CHANEST_OUT", default_value = "results")]
    out: PathBuf,
    /// Seeds evaluated concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Record elapsed seconds in `wall_time_s` (makes the CSV run-dependent).
    #[arg(long, global = true)]
    wall_time: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the datasets of every seed.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the experiment's networks and save checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate every method and write the CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoints written by `train`; without it the networks are trained first.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Run a built-in figure configuration.
    Reproduce {
        figure: Figure,
        #[arg(long, default_value = "smoke")]
        profile: Profile,
    },
}

fn with_seed(mut cfg: ExperimentConfig, base: Option<u64>) -> ExperimentConfig {
    if let Some(b) = base {
        cfg.seeds = (b..b + cfg.seeds.len() as u64).collect();
    }
    cfg
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn evaluate(cfg: &ExperimentConfig, common: &Common, models: Option<PathBuf>) -> Result<PathBuf> {
    let opts = RunOptions { jobs: common.jobs, record_wall_time: common.wall_time, models_dir: models };
    let table = run_experiment(cfg, &opts)?;
    let path = cfg.csv_path(&common.out);
    table.write_csv(&path)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Generate { config } => {
            let cfg = with_seed(ExperimentConfig::load(&config)?, common.seed);
            let dir = common.out.join("data");
            for &seed in &cfg.seeds {
                let path = generate_seed(&cfg, seed)?.write(&dir, &format!("{}_s{seed}", cfg.experiment))?;
                println!("{}", path.display());
            }
        }
        Command::Train { config } => {
            let cfg = with_seed(ExperimentConfig::load(&config)?, common.seed);
            let dir = common.out.join("models");
            for &seed in &cfg.seeds {
                for path in train_seed(&cfg, seed)?.save(&dir, cfg.experiment, seed)? {
                    println!("{}", path.display());
                }
            }
        }
        Command::Eval { config, models } => {
            let cfg = with_seed(ExperimentConfig::load(&config)?, common.seed);
            if let Some(dir) = &models {
                // fail before any work if a seed has no checkpoints
                for &seed in &cfg.seeds {
                    NamedModels::load(dir, cfg.experiment, seed)?;
                }
            }
            println!("{}", evaluate(&cfg, common, models)?.display());
        }
        Command::Reproduce { figure, profile } => {
            let cfg = figure_config(figure, profile, common.seed.unwrap_or(1));
            write_text(&common.out.join(format!("{figure}.config.json")), &cfg.to_json()?)?;
            println!("{}", evaluate(&cfg, common, None)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chanest: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_override_keeps_count() {
        let cfg = figure_config(Figure::Fig9b, Profile::Smoke, 1);
        let n = cfg.seeds.len();
        let shifted = with_seed(cfg, Some(40));
        assert_eq!(shifted.seeds, (40..40 + n as u64).collect::<Vec<_>>());
    }
}

