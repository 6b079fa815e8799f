use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use grazing_lab::config::{load, Format};
use grazing_lab::experiments::run;

/// Numerical experiments on the grazing collision limit.
#[derive(Parser)]
#[command(name = "grazing-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the configured experiment and writes its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output` from the configuration.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `format` from the configuration.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Also writes plot-ready `x,y,series` rows.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Parses and checks a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { config } => {
            load(&config)?;
            println!("{}: ok", config.display());
            Ok(true)
        }
        Command::Run { config, output, format, plot_data } => {
            let cfg = load(&config)?;
            let report = run(&cfg)?;
            let text = report.render(format.unwrap_or(cfg.format))?;
            match output.or(cfg.output.clone()) {
                Some(path) => std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            if let Some(path) = plot_data {
                std::fs::write(&path, report.plot_data()?).with_context(|| format!("writing {}", path.display()))?;
            }
            for a in report.failures() {
                eprintln!("FAIL {}: measured {:e}, threshold {:?}", a.property, a.measured, a.threshold);
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
