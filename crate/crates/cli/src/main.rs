use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cocycle_cli::{config, run, validate_file, ConfigError, RunOptions, EXAMPLES};

#[derive(Parser)]
#[command(name = "cocycle", version, about = "Transfer-operator experiments for matrix cocycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis in a config and write reports to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps the number of worker threads.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the grid resolution.
        #[arg(long = "grid-n")]
        grid_n: Option<usize>,
    },
    /// Check a config without computing anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the bundled example configs, or print one.
    ListExamples {
        /// Print the named example.
        #[arg(long)]
        show: Option<String>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
            grid_n,
        } => {
            let opts = RunOptions {
                out,
                seed,
                grid_n,
                threads,
            };
            match run(&config, &opts) {
                Ok(manifest) => {
                    for a in &manifest.analyses {
                        println!("{:<12} {:?} {:.2}s", a.analysis, a.status, a.wall_time_s);
                    }
                    if manifest.all_completed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    if let Some(c) = e.downcast_ref::<ConfigError>() {
                        eprint!("{c}");
                    } else {
                        eprintln!("error: {e:#}");
                    }
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match validate_file(&config) {
            Ok(diags) if diags.is_empty() => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Ok(diags) => {
                for d in diags {
                    println!("{d}");
                }
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::ListExamples { show } => match show {
            None => {
                for (name, text) in EXAMPLES {
                    let description = config::parse(text).map(|c| c.description).unwrap_or_default();
                    println!("{name:<18} {description}");
                }
                ExitCode::SUCCESS
            }
            Some(name) => match EXAMPLES.iter().find(|(n, _)| *n == name) {
                Some((_, text)) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("no example named {name}");
                    ExitCode::from(2)
                }
            },
        },
    }
}
