//! Config-driven experiment runner behind the `wbt` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod rows;
pub mod summarize;
pub mod template;
pub mod validate;

use std::path::{Path, PathBuf};

pub use error::{CliError, CliResult};
use rows::{Manifest, ResultRow};

/// Where a run writes when neither `--out` nor `output` is given.
pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub rows: Vec<ResultRow>,
}

/// Validates, runs every experiment in order and writes the results file and
/// manifest.
pub fn run(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<RunOutcome> {
    let loaded = config::load(config_path)?;
    let report = validate::validate(&loaded, seed);
    if !report.ok() {
        return Err(CliError::Invalid(report.errors));
    }
    let seed = seed.or(loaded.config.seed).expect("validated configs carry a seed");
    let mut rows = Vec::new();
    for exp in &loaded.config.experiments {
        rows.extend(experiments::run_experiment(exp, seed, &loaded.dir)?);
    }
    let dir = out
        .map(Path::to_owned)
        .or_else(|| loaded.config.output.as_ref().map(|o| loaded.dir.join(o)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let manifest = rows::write_outputs(
        &dir,
        &rows,
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_sha256: rows::sha256_hex(&loaded.raw),
            seed,
            experiments: loaded.config.experiments.iter().map(|e| e.id().to_owned()).collect(),
            rows: 0,
            results_sha256: String::new(),
        },
    )?;
    Ok(RunOutcome { dir, manifest, rows })
}
