//! Command-line front end: load scenario files, run the models and sweeps,
//! and write CSV and text reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Axis, RunOptions};
pub use config::ScenarioFile;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dycore-perf", version, about = "Dynamical core and I/O server performance model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every simulation in a config and write CSV tables and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Repeated I/O runs with perturbed write rates (see rate_jitter).
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one or more axes listed in the config's sweep section.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "axis", value_enum)]
        axes: Vec<Axis>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare CSV tables: ratios of the first to each other, mean ± sd.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Also write report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a config in canonical form with every default spelled out.
    Canonical {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Run the command line `args` (including the program name) and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out, repeat, seed } => {
            let cfg = ScenarioFile::load(&config)?.resolve()?;
            let files = commands::run(&cfg, RunOptions { repeat, seed })?;
            output::write_all(&out, &files)
        }
        Command::Sweep { config, axes, out } => {
            let cfg = ScenarioFile::load(&config)?.resolve()?;
            let files = commands::sweep(&cfg, &axes)?;
            output::write_all(&out, &files)
        }
        Command::Report { csv, out } => {
            let text = commands::report(&csv)?;
            print!("{text}");
            if let Some(dir) = out {
                let file =
                    output::OutputFile { name: "report.txt".into(), bytes: text.into_bytes() };
                output::write_all(&dir, &[file])?;
            }
            Ok(())
        }
        Command::Canonical { config } => {
            let file = ScenarioFile::load(&config)?;
            file.resolve()?;
            print!("{}", file.to_canonical());
            Ok(())
        }
    }
}
