use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavtun::scenario::{load_config, run_scenario, Kind, KEYS, SCHEMA_VERSION, SERIES_HEADER};
use cavtun::Error;

/// Cavity-coupled double-well tunneling scenarios.
#[derive(Parser)]
#[command(name = "cavtun", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV series and report.
    Run {
        config: PathBuf,
        /// Directory for outputs; defaults to the config's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate { config: PathBuf },
    /// Describe scenario kinds and config keys.
    List,
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { 2 } else { 3 })
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("CAVTUN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parse {
            line: 1,
            column: 1,
            message: format!("CAVTUN_THREADS must be a positive integer, got '{raw}'"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return exit_for(&e);
    }
    match cli.command {
        Command::List => {
            println!("cavtun {} (schema {SCHEMA_VERSION})", cavtun::VERSION);
            println!("\nkinds:");
            for k in Kind::ALL {
                println!("  {:<18} {}", k.name(), k.describe());
            }
            println!("\nkeys (key = value, one per line, # starts a comment):");
            for (key, default, meaning) in KEYS {
                println!("  {key:<15} default {default:<32} {meaning}");
            }
            println!("\nseries columns: {SERIES_HEADER}");
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config).and_then(|s| {
            s.validate()?;
            Ok(s)
        }) {
            Ok(s) => {
                for w in &s.warnings {
                    eprintln!("warning: {w}");
                }
                println!("OK");
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
        Command::Run { config, out_dir } => {
            let scenario = match load_config(&config) {
                Ok(s) => s,
                Err(e) => return exit_for(&e),
            };
            for w in &scenario.warnings {
                eprintln!("warning: {w}");
            }
            let dir = out_dir.unwrap_or_else(|| config.parent().map(PathBuf::from).unwrap_or_default());
            match run_scenario(&scenario, &dir) {
                Ok(out) => {
                    for f in &out.files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
