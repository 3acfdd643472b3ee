mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use commands::SweepParam;
use config::ConfigError;
use flatopt::optim::Mode;

/// Continual-learning optimizer experiments on synthetic and CSV streams.
#[derive(Parser)]
#[command(name = "flatopt", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration and write metrics, traces and a summary.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several optimizers on the same stream and seed.
    Compare {
        config: PathBuf,
        /// Comma-separated: sgd, sam, looksam, cflat, turbo.
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<Mode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Vary one hyperparameter, one run per value.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true, value_parser = commands::parse_value, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Parse and range-check a config without running anything.
    Validate { config: PathBuf },
}

fn main2(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run { config, out } => commands::run(&config, &out),
        Cmd::Compare { config, modes, out } => commands::compare(&config, &modes, &out),
        Cmd::Sweep {
            config,
            param,
            values,
            out,
        } => commands::sweep(&config, param, &values, &out),
        Cmd::Validate { config } => commands::validate(&config),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = main2(cli) {
        if let Some(c) = e.downcast_ref::<ConfigError>() {
            eprintln!("flatopt: {c}");
            process::exit(2);
        }
        eprintln!("flatopt: {e:#}");
        process::exit(1);
    }
}
