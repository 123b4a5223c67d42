//! `eegemo`: runs the EEG emotion pipeline from a TOML config.
//!
//! Exit codes: 0 on success, 1 when the work itself fails, 2 for usage and
//! configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "eegemo", version, about = "EEG emotion recognition pipeline")]
struct Cli {
    /// Pipeline config (TOML). Every key has a default.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set model.classifier.type=knn`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (config key `output_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Fold seed (config key `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-trial work (config key `jobs`).
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic trials from the `synth` table or a spec file.
    Synth {
        /// Spec file (TOML or JSON); replaces the config's `synth` table.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Turn trials into feature CSVs.
    Extract,
    /// Smooth feature CSVs with the configured smoother.
    Smooth,
    /// Rank features by MRMR or label correlation.
    Select,
    /// Fit the model on every input trial.
    Train {
        /// Model header path; `<out>/model.json` by default.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Label the input trials with a trained model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the configured evaluation protocol.
    Eval,
    /// Write per-class, per-band scalp map data from DE features.
    Topo,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", toml_string(&o.to_string_lossy())));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(j) = cli.jobs {
        overrides.push(format!("jobs={j}"));
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides).map_err(CliError::Usage)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build_global()
        .map_err(|e| CliError::Runtime(e.into()))?;
    match cli.command {
        Command::Synth { spec } => commands::synth(&cfg, spec.as_deref()),
        Command::Extract => commands::extract(&cfg),
        Command::Smooth => commands::smooth(&cfg),
        Command::Select => commands::select(&cfg),
        Command::Train { model } => commands::train(&cfg, model.as_deref()),
        Command::Predict { model } => commands::predict(&cfg, model.as_deref()),
        Command::Eval => commands::eval(&cfg),
        Command::Topo => commands::topo(&cfg),
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.error());
            ExitCode::from(e.code())
        }
    }
}
