//! `katolab` experiment runner.
//!
//! Every command reads one TOML [`ExperimentConfig`], writes CSV and JSON
//! artifacts tagged with the config hash, and finishes with `manifest.json`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::Parser;
use katolab::error::LabError;

use crate::commands::{Command, Context};
use crate::config::{ExperimentConfig, ToleranceProfile};
use crate::output::RunWriter;

pub const OUTPUT_ENV: &str = "KATOLAB_OUTPUT";

#[derive(Debug, Parser)]
#[command(
    name = "katolab",
    version,
    about = "Numerical laboratory for wave decay with Kato-class potentials"
)]
struct Cli {
    /// TOML experiment config; the built-in example when absent.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Run directory, overriding the config and the output root.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, value_enum, default_value = "strict", global = true)]
    tolerance_profile: ToleranceProfile,

    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;
const EXIT_RESONANCE: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<LabError>() {
        Some(LabError::Resonance { .. }) => EXIT_RESONANCE,
        Some(LabError::Io(_)) | Some(LabError::Json(_)) => 1,
        Some(_) => EXIT_PRECONDITION,
        None if e.downcast_ref::<ConfigError>().is_some() => EXIT_CONFIG,
        None => 1,
    }
}

#[derive(Debug)]
struct ConfigError;

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

impl std::error::Error for ConfigError {}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::example(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg.with_profile(cli.tolerance_profile))
}

fn run_dir(cli: &Cli, cfg: &ExperimentConfig, hash: &str) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let root = std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    match &cfg.output_dir {
        Some(dir) => root.join(dir),
        None => root.join(&hash[..12]),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let cfg = load_config(&cli).map_err(|e| e.context(ConfigError))?;
    if cli.print_config {
        print!("{}", toml::to_string(&cfg)?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(anyhow::anyhow!("no command given, see --help").context(ConfigError));
    };
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring the worker pool")?;
    let hash = cfg.hash();
    let ctx = Context::new(&cfg)?;
    let mut out = RunWriter::new(&run_dir(&cli, &cfg, &hash), &hash)?;
    let summary = commands::run(command, &ctx, &mut out)?;
    let commands = match command {
        Command::All => Command::ALL.iter().map(|c| c.name().to_string()).collect(),
        c => vec![c.name().to_string()],
    };
    let profile = match cli.tolerance_profile {
        ToleranceProfile::Fast => "fast",
        ToleranceProfile::Strict => "strict",
    };
    let dir = out.dir().to_path_buf();
    out.finish(commands, cfg.seed, profile, jobs, start.elapsed())?;
    println!("{summary}");
    println!("config {hash}");
    println!("wrote {}", dir.display());
    Ok(())
}
