//! Schema, budget and premise checks run before any simulation.

use std::collections::BTreeSet;
use std::fmt;

use wbt_core::branching::Mode;
use wbt_core::convergence::{check_schedule_premise, SamplerSequence, Schedule};
use wbt_core::Error;

use crate::config::{ConvergeSpec, ConvergeTest, DegreeSource, Experiment, LoadedConfig};
use crate::error::CliError;
use crate::experiments::{build_coupling, build_sequence, build_simulate, experiment_key, load_degrees};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

struct Checker<'a> {
    id: &'a str,
    report: &'a mut Report,
}

impl Checker<'_> {
    fn error(&mut self, msg: impl fmt::Display) {
        self.report.errors.push(format!("experiment {}: {msg}", self.id));
    }

    fn warn(&mut self, msg: impl fmt::Display) {
        self.report.warnings.push(format!("experiment {}: {msg}", self.id));
    }

    fn positive(&mut self, field: &str, v: usize) {
        if v == 0 {
            self.error(format!("{field}: must be positive"));
        }
    }

    /// Monte Carlo replication counts need two draws for a standard error.
    fn replications(&mut self, field: &str, v: usize) {
        if v < 2 {
            self.error(format!("{field}: needs at least 2 replications for a standard error, got {v}"));
        }
    }

    fn grid(&mut self, grid: &[u64]) {
        if grid.is_empty() {
            self.error("n_grid: empty");
        } else if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            self.error("n_grid: must be positive and strictly increasing");
        }
    }

    fn cli(&mut self, e: CliError) {
        match e {
            CliError::Core(Error::MomentUnavailable(m)) => self.missing_moment(&m),
            other => self.error(other),
        }
    }

    fn core(&mut self, e: Error) {
        match e {
            Error::MomentUnavailable(m) => self.missing_moment(&m),
            other => self.error(other),
        }
    }

    fn side(&mut self, side: &str, e: Error) {
        match e {
            Error::MomentUnavailable(m) => self.missing_moment(&format!("{side}: {m}")),
            other => self.error(format!("{side}: {other}")),
        }
    }

    fn missing_moment(&mut self, accessor: &str) {
        self.error(format!("undeclared moment, missing accessor: {accessor}"));
    }
}

pub fn validate(loaded: &LoadedConfig, seed_override: Option<u64>) -> Report {
    let mut report = Report::default();
    let cfg = &loaded.config;
    let seed = seed_override.or(cfg.seed);
    if seed.is_none() {
        report.errors.push("seed: missing; set `seed` in the config or pass --seed".into());
    }
    if cfg.experiments.is_empty() {
        report.errors.push("experiment: no experiments declared".into());
    }
    let mut ids = BTreeSet::new();
    for exp in &cfg.experiments {
        let id = exp.id();
        if id.is_empty() {
            report.errors.push("experiment id: empty".into());
        } else if !ids.insert(id) {
            report.errors.push(format!("experiment id: `{id}` is used twice"));
        }
        let mut c = Checker { id, report: &mut report };
        check_experiment(&mut c, exp, loaded, seed.unwrap_or(0));
    }
    report
}

fn check_experiment(c: &mut Checker<'_>, exp: &Experiment, loaded: &LoadedConfig, seed: u64) {
    match exp {
        Experiment::Simulate(s) => {
            c.replications("reps", s.reps);
            c.positive("node_cap", s.node_cap);
            if s.sampler.depends_on_n() {
                c.error("sampler: uses `n`, but simulate has no n grid");
            }
            match build_simulate(s) {
                Ok((sampler, _)) => {
                    if s.normalize {
                        match sampler.moments() {
                            Ok(m) if m.rho > 0.0 => {}
                            Ok(_) => c.error("normalize: rho = 0"),
                            Err(e) => c.core(e),
                        }
                    }
                }
                Err(e) => c.cli(e),
            }
        }
        Experiment::Certify(s) => {
            if s.levels.is_empty() {
                c.error("levels: empty");
            }
            c.replications("reps", s.reps);
            c.replications("mc_reps", s.mc_reps);
            c.positive("node_cap", s.node_cap);
            match build_coupling(s) {
                Ok(cs) => {
                    for (side, sampler) in [("a", &cs.a), ("b", &cs.b)] {
                        if let Err(e) = sampler.moments() {
                            c.side(side, e);
                        }
                    }
                    if let Some(r) = &cs.root {
                        for (side, root) in [("root_a", &r.a), ("root_b", &r.b)] {
                            if let Err(e) = root.moments() {
                                c.side(side, e);
                            }
                        }
                    }
                }
                Err(e) => c.cli(e),
            }
        }
        Experiment::Converge(s) => check_converge(c, s),
        Experiment::Graph(s) => {
            c.grid(&s.n_grid);
            c.replications("reps", s.reps);
            c.positive("root_draws", s.root_draws);
            c.positive("node_cap", s.node_cap);
            if let Err(e) = s.degree_law.validate() {
                c.error(format!("degree_law: {e}"));
            } else if !s.degree_law.is_count() {
                c.error("degree_law: must be a nonnegative integer law");
            } else if s.degree_law.abs_moment(2.0).is_none_or(|m| !m.is_finite()) {
                c.missing_moment("E[D^2] of degree_law");
            }
        }
        Experiment::Sizebias(s) => {
            c.grid(&s.n_grid);
            c.replications("reps", s.reps);
            if let Err(e) = s.degree_law.validate() {
                c.error(format!("degree_law: {e}"));
            } else if !s.degree_law.is_count() {
                c.error("degree_law: must be a nonnegative integer law");
            } else if !(s.eps_moment > 0.0) {
                c.error("eps_moment: must be positive");
            } else if s.degree_law.abs_moment(2.0 + s.eps_moment).is_none_or(|m| !m.is_finite()) {
                c.missing_moment(&format!("E[D^(2+{})] of degree_law", s.eps_moment));
            }
            if !(s.delta_star > 0.0 && s.delta_star < 0.5) {
                c.error(format!("delta_star: {} is not in (0, 1/2)", s.delta_star));
            }
            let cap = 0.5f64.min(s.eps_moment / (2.0 + s.eps_moment));
            if !(s.delta > 0.0 && s.delta < cap) {
                c.error(format!("delta: {} is not in (0, {cap})", s.delta));
            }
        }
        Experiment::Rank(s) => {
            c.replications("reps", s.reps);
            c.positive("n_samples", s.n_samples);
            if !(s.damping > 0.0 && s.damping < 1.0) {
                c.error(format!("damping: {} is not in (0, 1)", s.damping));
            }
            if let DegreeSource::Sampled { n, .. } = &s.degrees {
                c.positive("degrees.n", *n);
            }
            if let Err(e) = load_degrees(s, &loaded.dir, experiment_key(seed, &s.id)) {
                c.cli(e);
            }
        }
    }
}

fn check_converge(c: &mut Checker<'_>, s: &ConvergeSpec) {
    c.grid(&s.n_grid);
    if !matches!(s.test, ConvergeTest::Lemma) {
        c.replications("reps", s.reps);
        c.positive("n_samples", s.n_samples);
    }
    c.positive("node_cap", s.node_cap);
    if s.n_grid.is_empty() {
        return;
    }
    let seq = match build_sequence(s) {
        Ok(seq) => seq,
        Err(e) => return c.cli(e),
    };
    for &n in &s.n_grid {
        if let Err(e) = seq.at(n).and_then(|x| x.moments()) {
            return c.core(e);
        }
    }
    let limit = match seq.limit().moments() {
        Ok(m) => m,
        Err(e) => return c.core(e),
    };
    match &s.test {
        ConvergeTest::FixedLevel { .. } => {}
        ConvergeTest::Martingale { schedule, proxy_depth, .. } => {
            let lim = seq.limit();
            if !lim.has_unit_marks() || !lim.weights_nonnegative() {
                c.error("limit: the scaled martingale needs Q = 1 and nonnegative weights");
            }
            if limit.rho <= 0.0 {
                c.error("limit: the scaled martingale needs rho > 0");
            }
            if proxy_depth == &Some(0) {
                c.error("test.proxy_depth: must be positive");
            }
            premise(c, &seq, schedule, &s.n_grid);
        }
        ConvergeTest::RLimit { schedule, eps } => {
            if !(limit.rho < 1.0) {
                c.error(format!(
                    "limit: the R-limit experiment requires the contraction premise rho < 1, got rho = {}",
                    limit.rho
                ));
            }
            if !(*eps > 0.0) {
                c.error("test.eps: must be positive");
            }
            premise(c, &seq, schedule, &s.n_grid);
        }
        ConvergeTest::Lemma => {
            if seq.mode() != Mode::Wbt {
                c.error("limit: the lemma check needs weighted branching trees (mode = \"wbt\")");
            }
        }
    }
}

/// Flags schedules whose j_n d1(mu_n, mu) does not vanish over the grid.
fn premise(c: &mut Checker<'_>, seq: &SamplerSequence, schedule: &Schedule, grid: &[u64]) {
    match check_schedule_premise(seq, schedule, grid) {
        Ok(p) if p.holds => {}
        Ok(p) => {
            let (first, last) = (p.rows[0], p.rows[p.rows.len() - 1]);
            c.warn(format!(
                "test.schedule: j_n * d1 does not vanish over the grid (n = {}: {:.4e} -> n = {}: {:.4e}; roots {:.4e} -> {:.4e}); the convergence premise is violated",
                first.0, first.2, last.0, last.2, first.3, last.3
            ));
        }
        Err(e) => c.warn(format!("test.schedule: premise not checkable: {e}")),
    }
}
