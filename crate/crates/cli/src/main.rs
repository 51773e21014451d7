use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wbt_cli::{config, rows, summarize, validate, CliError};

#[derive(Parser)]
#[command(name = "wbt", version, about = "Weighted branching tree experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment of a config and write results.csv and manifest.toml.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for replications (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate a results file; with --out, also write x/y series files.
    Summarize {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| CliError::field("threads", e.to_string()))?;
            }
            let outcome = wbt_cli::run(&config, seed, out.as_deref())?;
            println!(
                "wrote {} rows to {} (results sha256 {})",
                outcome.manifest.rows,
                outcome.dir.join(rows::RESULTS_FILE).display(),
                outcome.manifest.results_sha256
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config, seed } => {
            let loaded = config::load(&config)?;
            let report = validate::validate(&loaded, seed);
            print!("{report}");
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Summarize { results, out } => {
            let rows = rows::read_csv(&results)?;
            let s = summarize::summarize(&rows, out.as_deref())?;
            print!("{}", s.text);
            for p in &s.series {
                println!("series: {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
