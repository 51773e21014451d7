//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;
use wbt_core::branching::{Mode, Sharing};
use wbt_core::convergence::{Process, Schedule};
use wbt_core::coupling::JointRow;
use wbt_core::dist::Dist;

use crate::error::{CliError, CliResult};
use crate::template::Template;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Output directory used when `--out` is not given.
    pub output: Option<PathBuf>,
    #[serde(rename = "experiment", default)]
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Simulate(SimulateSpec),
    Certify(CertifySpec),
    Converge(ConvergeSpec),
    Graph(GraphSpec),
    Sizebias(SizebiasSpec),
    Rank(RankSpec),
}

impl Experiment {
    pub fn id(&self) -> &str {
        match self {
            Self::Simulate(s) => &s.id,
            Self::Certify(s) => &s.id,
            Self::Converge(s) => &s.id,
            Self::Graph(s) => &s.id,
            Self::Sizebias(s) => &s.id,
            Self::Rank(s) => &s.id,
        }
    }
}

fn default_cap() -> usize {
    wbt_core::branching::DEFAULT_NODE_CAP
}

/// Means of W^(j) and R^(j) of one law over `reps` trees.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub id: String,
    pub sampler: Template,
    pub root: Option<Template>,
    pub depth: usize,
    pub reps: usize,
    /// Also report W^(j) / rho^j.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_cap")]
    pub node_cap: usize,
}

/// Monte Carlo gap against the coupling bound at each level.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    pub id: String,
    pub a: Option<Template>,
    pub b: Option<Template>,
    /// Components driven by a common uniform; all of them by default.
    pub sharing: Option<Sharing>,
    /// Explicit joint law instead of `a`, `b` and `sharing`.
    pub joint: Option<Vec<JointRow>>,
    /// Mode of the joint table.
    pub mode: Option<Mode>,
    pub root_a: Option<Template>,
    pub root_b: Option<Template>,
    pub root_sharing: Option<Sharing>,
    pub levels: Vec<usize>,
    pub reps: usize,
    /// Draws for constants that have no exact evaluation.
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    #[serde(default = "default_cap")]
    pub node_cap: usize,
}

fn default_mc_reps() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    pub id: String,
    /// Sampler template in `n`.
    pub family: Template,
    pub limit: Template,
    pub root_family: Option<Template>,
    pub root_limit: Option<Template>,
    /// Analytic d1(mu_n, mu) as an expression in `n`.
    pub declared_d1: Option<String>,
    pub n_grid: Vec<u64>,
    /// Trees per side in each replication.
    pub n_samples: usize,
    pub reps: usize,
    #[serde(default = "default_cap")]
    pub node_cap: usize,
    pub test: ConvergeTest,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvergeTest {
    FixedLevel {
        process: Process,
        level: usize,
    },
    Martingale {
        schedule: Schedule,
        proxy_depth: Option<usize>,
        #[serde(default)]
        mean_one: bool,
    },
    RLimit {
        schedule: Schedule,
        eps: f64,
    },
    Lemma,
}

/// Delayed GW coupling driven by sampled degree sequences.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub id: String,
    pub degree_law: Dist,
    pub n_grid: Vec<u64>,
    pub schedule: Schedule,
    pub reps: usize,
    #[serde(default = "default_root_draws")]
    pub root_draws: usize,
    #[serde(default = "default_cap")]
    pub node_cap: usize,
}

fn default_root_draws() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizebiasSpec {
    pub id: String,
    pub degree_law: Dist,
    pub eps_moment: f64,
    pub n_grid: Vec<u64>,
    pub delta_star: f64,
    pub delta: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSpec {
    pub id: String,
    pub degrees: DegreeSource,
    pub damping: f64,
    pub k: usize,
    pub n_samples: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegreeSource {
    /// `in,out` pairs, one per line; relative paths resolve against the
    /// config file's directory.
    File { path: PathBuf },
    Sampled { in_law: Dist, out_law: Dist, n: usize },
}

/// A parsed config together with its raw bytes and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let raw = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let text = std::str::from_utf8(&raw).map_err(|e| CliError::Parse(e.to_string()))?;
    let config = parse(text)?;
    Ok(LoadedConfig {
        config,
        raw,
        dir: path.parent().map(Path::to_owned).unwrap_or_default(),
    })
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_kind() {
        let cfg = parse(
            r#"
            seed = 1
            [[experiment]]
            kind = "simulate"
            id = "s"
            depth = 3
            reps = 10
            sampler = { mode = "wbp", law = { form = "composed", q = { kind = "point", value = 1 }, n = { kind = "point", value = 2 }, c = { rule = "iid", dist = { kind = "point", value = 0.5 } } } }

            [[experiment]]
            kind = "sizebias"
            id = "z"
            degree_law = { kind = "point", value = 3 }
            eps_moment = 1.0
            n_grid = [10, 100]
            delta_star = 0.4
            delta = 0.3
            reps = 2

            [[experiment]]
            kind = "converge"
            id = "c"
            n_grid = [1, 2]
            n_samples = 10
            reps = 2
            family = { mode = "wbp", law = { form = "composed", q = { kind = "point", value = "1 + 1 / n" }, n = { kind = "point", value = 0 }, c = { rule = "iid", dist = { kind = "point", value = 0 } } } }
            limit = { mode = "wbp", law = { form = "composed", q = { kind = "point", value = 1 }, n = { kind = "point", value = 0 }, c = { rule = "iid", dist = { kind = "point", value = 0 } } } }
            test = { kind = "fixed_level", process = "w", level = 0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiments.len(), 3);
        assert_eq!(cfg.experiments[1].id(), "z");
    }

    #[test]
    fn unknown_fields_are_named() {
        let err = parse(
            r#"
            [[experiment]]
            kind = "sizebias"
            id = "z"
            degree_law = { kind = "point", value = 3 }
            eps_moment = 1.0
            n_grid = [10]
            delta_star = 0.4
            delta = 0.3
            reps = 2
            repz = 3
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("repz"), "{err}");
    }
}
