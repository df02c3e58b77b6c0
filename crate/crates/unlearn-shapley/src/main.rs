use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use unlearn_shapley::config::{ExperimentConfig, ModeFlag};
use unlearn_shapley::experiment;
use unlearn_shapley::ValuationError;

#[derive(Parser)]
#[command(name = "unshap", version, about = "Training-data valuation via unlearning-based Shapley values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Approx,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file
    Run {
        config: PathBuf,
        /// Override the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Size of the worker pool (default: all cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Override the unlearning mode
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Check a config file without running it
    Validate { config: PathBuf },
}

// 0 success, 1 config error, 2 data error, 3 numeric failure
fn run_exit_code(e: &ValuationError) -> u8 {
    match e {
        ValuationError::Io(_) | ValuationError::Parse { .. } => 2,
        ValuationError::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, workers, mode } => {
            if let Some(n) = workers {
                if let Err(e) =
                    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()
                {
                    eprintln!("error: cannot size worker pool: {e}");
                    return ExitCode::from(1);
                }
            }
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let mut cfg = match ExperimentConfig::parse(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.shapley.mode = match m {
                    ModeArg::Approx => ModeFlag::Approx,
                    ModeArg::Oracle => ModeFlag::Oracle,
                };
            }
            match experiment::run(&cfg) {
                Ok(output) => {
                    println!("{}", serde_json::to_string_pretty(&output.summary).unwrap());
                    for file in &output.files {
                        println!("wrote {}", file.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(run_exit_code(&e))
                }
            }
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match ExperimentConfig::parse_with_report(&text) {
                Ok((_, report)) => {
                    print!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
