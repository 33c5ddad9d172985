//! Command-line parsing and dispatch.

use std::path::PathBuf;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::runner::{cmd_chain, cmd_report, cmd_stats, cmd_train_pool, cmd_update, RunOptions};

pub const USAGE: &str = "\
pctlab - positive-congruent training laboratory

USAGE:
    pctlab <command> [options] [manifest paths...]

COMMANDS:
    train-pool    Train a seed pool of independent models
    update        Run an old -> new model update experiment
    chain         Run a sequential multi-model update
    stats         Measure logit-displacement statistics over a seed pool
    report        Consolidate update reports from manifests

OPTIONS:
    --config <path>       Experiment config file (required except for report)
    --out <dir>           Output directory (required)
    --seed-offset <int>   Shift all role seed bases (default 0)
    --jobs <int>          Parallel training jobs for pools (default 1)
";

#[derive(Debug)]
pub struct CliArgs {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed_offset: u64,
    pub jobs: usize,
    pub positional: Vec<PathBuf>,
}

pub fn parse_args<I: Iterator<Item = String>>(mut args: I) -> Result<CliArgs> {
    let command = args.next().ok_or_else(|| LabError::config(format!("missing command\n{USAGE}")))?;
    let mut parsed = CliArgs {
        command,
        config_path: None,
        out_dir: None,
        seed_offset: 0,
        jobs: 1,
        positional: Vec::new(),
    };
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--config" => {
                let v = args.next().ok_or_else(|| LabError::config("--config needs a value"))?;
                parsed.config_path = Some(PathBuf::from(v));
            }
            "--out" => {
                let v = args.next().ok_or_else(|| LabError::config("--out needs a value"))?;
                parsed.out_dir = Some(PathBuf::from(v));
            }
            "--seed-offset" => {
                let v = args.next().ok_or_else(|| LabError::config("--seed-offset needs a value"))?;
                parsed.seed_offset = v
                    .parse()
                    .map_err(|_| LabError::config(format!("--seed-offset: not an integer: {v}")))?;
            }
            "--jobs" => {
                let v = args.next().ok_or_else(|| LabError::config("--jobs needs a value"))?;
                parsed.jobs = v
                    .parse()
                    .map_err(|_| LabError::config(format!("--jobs: not an integer: {v}")))?;
                if parsed.jobs == 0 {
                    return Err(LabError::config("--jobs must be >= 1"));
                }
            }
            other if other.starts_with("--") => {
                return Err(LabError::config(format!("unknown flag `{other}`\n{USAGE}")));
            }
            other => parsed.positional.push(PathBuf::from(other)),
        }
    }
    Ok(parsed)
}

pub fn run(args: CliArgs) -> Result<()> {
    let out_dir = args
        .out_dir
        .clone()
        .ok_or_else(|| LabError::config("--out <dir> is required"))?;
    let opts = RunOptions { out_dir, seed_offset: args.seed_offset, jobs: args.jobs };

    let load_config = || -> Result<ExperimentConfig> {
        let path = args
            .config_path
            .as_ref()
            .ok_or_else(|| LabError::config("--config <path> is required for this command"))?;
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        ExperimentConfig::from_text(&text)
    };

    match args.command.as_str() {
        "train-pool" => cmd_train_pool(&load_config()?, &opts).map(|_| ()),
        "update" => cmd_update(&load_config()?, &opts).map(|_| ()),
        "chain" => cmd_chain(&load_config()?, &opts).map(|_| ()),
        "stats" => cmd_stats(&load_config()?, &opts).map(|_| ()),
        "report" => cmd_report(&args.positional, &opts).map(|_| ()),
        other => Err(LabError::config(format!("unknown command `{other}`\n{USAGE}"))),
    }
}
