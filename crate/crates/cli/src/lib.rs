//! Command-line front-end for aewatch. Each subcommand is one pipeline stage;
//! stages exchange data through files in the output directory.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use aewatch::method::MethodRegistry;
use aewatch::{Error, Result};

use crate::config::{extract_overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "aewatch",
    about = "Autoencoder fault detection for multivariate sensor logs",
    after_help = "Any config value can be overridden with --section.key VALUE, e.g. --train.max_epochs 10."
)]
pub struct Cli {
    /// INI config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Clean, label, split and scale a sensor log
    Prepare,
    /// Train the configured autoencoder on healthy training rows
    Train,
    /// Fit the alarm threshold on training scores
    Threshold,
    /// Score the test partition (or paths.holdout_csv) and flag anomalies
    Detect,
    /// Compare flags against fault labels
    Eval,
    /// Generate a synthetic plant log with injected faults
    Synth,
    /// Write bottleneck codes of one partition
    ExportLatent,
}

/// Builds the effective configuration: defaults, config file, then flags.
pub fn resolve_config(cli: &Cli, overrides: &std::collections::BTreeMap<String, String>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_ini(path)?;
    }
    cfg.apply_overrides(overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig, registry: &MethodRegistry) -> Result<()> {
    cfg.validate()?;
    match command {
        Command::Prepare => {
            let summary = commands::cmd_prepare(cfg)?;
            print!("{}", summary.render());
        }
        Command::Train => {
            let report = commands::cmd_train(cfg, registry)?;
            let last = report.epochs.last();
            println!(
                "epochs {} best_epoch {} stop {:?} val_loss {}",
                report.epochs.len(),
                report.best_epoch,
                report.stop_reason,
                last.map_or(f64::NAN, |r| r.val_loss)
            );
        }
        Command::Threshold => {
            let tau = commands::cmd_threshold(cfg, registry)?;
            println!("alpha {} tau {tau}", cfg.alpha);
        }
        Command::Detect => {
            let (n, flagged) = commands::cmd_detect(cfg, registry)?;
            println!("scored {n} flagged {flagged}");
        }
        Command::Eval => {
            let report = commands::cmd_eval(cfg, registry)?;
            print!("{report}");
        }
        Command::Synth => {
            let (rows, faults) = commands::cmd_synth(cfg)?;
            println!("rows {rows} faults {faults}");
        }
        Command::ExportLatent => {
            let rows = commands::cmd_export_latent(cfg, registry)?;
            println!("latent rows {rows}");
        }
    }
    Ok(())
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let (rest, overrides) = match extract_overrides(args) {
        Ok(split) => split,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve_config(&cli, &overrides)
        .and_then(|cfg| execute(cli.command, &cfg, &MethodRegistry::with_defaults()));
    match result {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
