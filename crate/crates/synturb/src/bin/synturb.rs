//! Command-line entry point: run, validate, and list experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use synturb::config::{load_config, RunConfig};
use synturb::{runner, Error, Result};

#[derive(Parser)]
#[command(
    name = "synturb",
    version,
    about = "Synthetic turbulence, pair dispersion, and scalar transport experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment; write tables, snapshots, and the run record.
    Run {
        /// Configuration file (TOML).
        #[arg(long, value_name = "PATH", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration name (see the presets subcommand).
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        /// Output directory, created if missing.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core. Results do not depend on this.
        #[arg(long, value_name = "N", default_value_t = 0)]
        threads: usize,
        /// Emit a gnuplot script next to each table.
        #[arg(long)]
        plots: bool,
    },
    /// Check a configuration: exponents, schedules, step bounds, audit.
    Validate {
        /// Configuration file (TOML).
        #[arg(long, value_name = "PATH", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration name (see the presets subcommand).
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        /// Override the configured seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// List the built-in experiment presets.
    Presets,
}

fn resolve(
    config: Option<PathBuf>,
    preset: Option<String>,
    seed: Option<u64>,
) -> Result<RunConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), None) => load_config(&path)?,
        (None, Some(name)) => runner::preset(&name)?,
        (None, None) => {
            return Err(Error::Config(
                "one of --config or --preset is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, preset, out, seed, threads, plots } => {
            let mut cfg = resolve(config, preset, seed)?;
            if plots {
                cfg.emit_plots = true;
            }
            let record = runner::run(&cfg, &out, threads)?;
            println!(
                "{} ({}), seed {}, {:.2} s wall",
                record.experiment, record.tool, record.seed, record.wall_seconds
            );
            for name in &record.outputs {
                println!("  {}", out.join(name).display());
            }
            Ok(())
        }
        Command::Validate { config, preset, seed } => {
            let cfg = resolve(config, preset, seed)?;
            print!("{}", runner::validate(&cfg)?);
            Ok(())
        }
        Command::Presets => {
            print!("{}", runner::preset_summary());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
