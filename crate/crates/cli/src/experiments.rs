//! Builds core objects from experiment specs and turns their outputs into
//! rows.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use wbt_core::branching::{grow, r_process, BranchingVectorSampler, GrowOptions, RootSampler, Sharing};
use wbt_core::convergence::{
    check_schedule_premise, fixed_level_convergence, lemma_condition_check, r_limit_convergence,
    scaled_martingale_convergence, Budget, SamplerSequence, DEFAULT_PROXY_DEPTH,
};
use wbt_core::coupling::{certify, CoupledSampler, RootCoupling};
use wbt_core::graphs::{gw_coupling_experiment, rank_vs_wbt, sizebias_rate_experiment, BiDegreeSequence};
use wbt_core::stats::mean_se;
use wbt_core::stream::StreamKey;

use crate::config::{CertifySpec, ConvergeSpec, ConvergeTest, DegreeSource, Experiment, RankSpec, SimulateSpec};
use crate::error::{CliError, CliResult};
use crate::rows::{At, ResultRow, RowSink, EXACT, MC};
use crate::template::eval_expr;

/// Stream of one experiment: the run seed forked by a hash of its id, so
/// adding or reordering experiments leaves the others unchanged.
pub fn experiment_key(seed: u64, id: &str) -> StreamKey {
    let digest = Sha256::digest(id.as_bytes());
    let mut tag = [0u8; 8];
    tag.copy_from_slice(&digest[..8]);
    StreamKey::new(seed).fork(u64::from_le_bytes(tag))
}

pub fn run_experiment(exp: &Experiment, seed: u64, dir: &Path) -> CliResult<Vec<ResultRow>> {
    let id = exp.id();
    let key = experiment_key(seed, id);
    let mut sink = RowSink::new(id);
    let core = |source| CliError::Experiment { id: id.to_owned(), source };
    match exp {
        Experiment::Simulate(s) => simulate(s, key, &mut sink),
        Experiment::Certify(s) => {
            let cs = build_coupling(s)?;
            let opts = GrowOptions {
                cap: s.node_cap,
                retain: false,
            };
            let report = certify(&cs, &s.levels, s.reps, s.mc_reps, opts, key).map_err(core)?;
            let c = &report.constants;
            let note = if c.exact { EXACT } else { MC };
            sink.exact(At::default(), "rho", c.rho);
            sink.exact(At::default(), "rho_hat", c.rho_hat);
            sink.mean(At::default(), "e", c.e, note);
            if cs.mode() == wbt_core::branching::Mode::Wbt {
                sink.mean(At::default(), "e_star", c.e_star, note);
            }
            for r in &report.rows {
                let at = At::j(r.j);
                sink.push(at, "gap", r.gap, r.gap_se, MC);
                sink.push(at, "bound_statement", r.bound_statement, r.bound_se, note);
                sink.push(at, "bound_proof", r.bound_proof, r.bound_se, note);
                sink.exact(at, "slack", r.slack);
                sink.flag(at, "pass", r.pass);
            }
            Ok(())
        }
        Experiment::Converge(s) => converge(s, key, &mut sink),
        Experiment::Graph(s) => {
            let rep = gw_coupling_experiment(&s.degree_law, &s.n_grid, &s.schedule, s.reps, s.root_draws, s.node_cap, key)
                .map_err(core)?;
            sink.curve("normalized_max_gap", &rep.normalized)?;
            sink.curve("unnormalized_max_gap", &rep.unnormalized)?;
            for &(n, m) in &rep.j1_identity {
                sink.mean(At::nj(n, 1), "j1_identity_residual", m, MC);
            }
            Ok(())
        }
        Experiment::Sizebias(s) => {
            let rates = sizebias_rate_experiment(&s.degree_law, s.eps_moment, &s.n_grid, s.delta_star, s.delta, s.reps, key)
                .map_err(core)?;
            sink.points("scaled_d1_nu_star", &rates.star);
            sink.strictly_decreasing("scaled_d1_nu_star", &rates.star);
            sink.points("scaled_d1_nu", &rates.sized);
            sink.strictly_decreasing("scaled_d1_nu", &rates.sized);
            Ok(())
        }
        Experiment::Rank(s) => rank(s, dir, key, &mut sink),
    }
    .map_err(|e| match e {
        CliError::Core(source) => CliError::Experiment { id: id.to_owned(), source },
        other => other,
    })?;
    Ok(sink.rows)
}

fn opts(cap: usize) -> GrowOptions {
    GrowOptions { cap, retain: false }
}

pub fn build_simulate(s: &SimulateSpec) -> CliResult<(BranchingVectorSampler, Option<RootSampler>)> {
    let sampler: BranchingVectorSampler = s.sampler.instantiate(None, "sampler")?;
    sampler.validate()?;
    let root: Option<RootSampler> = s.root.as_ref().map(|t| t.instantiate(None, "root")).transpose()?;
    if let Some(r) = &root {
        r.validate()?;
    }
    Ok((sampler, root))
}

fn simulate(s: &SimulateSpec, key: StreamKey, sink: &mut RowSink) -> CliResult<()> {
    let (sampler, root) = build_simulate(s)?;
    let per_rep: Vec<(Vec<f64>, Vec<f64>)> = (0..s.reps)
        .into_par_iter()
        .map(|r| {
            let tree = grow(&sampler, root.as_ref(), s.depth, opts(s.node_cap), key.child(r as u64))?;
            let w = tree.levels.iter().map(|l| l.w).collect();
            let rr = (0..=s.depth).map(|k| r_process(&tree, k)).collect::<wbt_core::Result<_>>()?;
            Ok((w, rr))
        })
        .collect::<wbt_core::Result<_>>()?;
    let rho = sampler.moments().ok().map(|m| m.rho);
    if let Some(rho) = rho {
        sink.exact(At::default(), "rho", rho);
    }
    for j in 0..=s.depth {
        let w: Vec<f64> = per_rep.iter().map(|p| p.0[j]).collect();
        let r: Vec<f64> = per_rep.iter().map(|p| p.1[j]).collect();
        sink.mean(At::j(j), "w_mean", mean_se(&w), MC);
        sink.mean(At::j(j), "r_mean", mean_se(&r), MC);
        if s.normalize {
            let rho = rho.filter(|&x| x > 0.0).ok_or_else(|| CliError::field("normalize", "needs a finite rho > 0"))?;
            let scale = rho.powi(j as i32);
            let normed: Vec<f64> = w.iter().map(|x| x / scale).collect();
            sink.mean(At::j(j), "w_over_rho_mean", mean_se(&normed), MC);
        }
    }
    Ok(())
}

pub fn build_coupling(s: &CertifySpec) -> CliResult<CoupledSampler> {
    let cs = match (&s.joint, &s.a, &s.b) {
        (Some(rows), None, None) => {
            if s.sharing.is_some() {
                return Err(CliError::field("sharing", "a joint table shares its row uniform; drop `sharing`"));
            }
            let mode = s.mode.ok_or_else(|| CliError::field("mode", "required with `joint`"))?;
            CoupledSampler::joint_table(mode, rows.clone())?
        }
        (None, Some(a), Some(b)) => {
            if s.mode.is_some() {
                return Err(CliError::field("mode", "only used with `joint`; the samplers carry their own mode"));
            }
            let a: BranchingVectorSampler = a.instantiate(None, "a")?;
            let b: BranchingVectorSampler = b.instantiate(None, "b")?;
            CoupledSampler::new(a, b, s.sharing.unwrap_or(Sharing::ALL), None)?
        }
        (Some(_), _, _) => return Err(CliError::field("joint", "give either `joint` or both `a` and `b`")),
        _ => return Err(CliError::field("a", "both `a` and `b` are required without `joint`")),
    };
    match (&s.root_a, &s.root_b) {
        (None, None) => Ok(cs),
        (Some(ra), Some(rb)) => Ok(cs.with_root(RootCoupling {
            a: ra.instantiate(None, "root_a")?,
            b: rb.instantiate(None, "root_b")?,
            sharing: s.root_sharing.unwrap_or(Sharing::ALL),
        })?),
        _ => Err(CliError::field("root_a", "`root_a` and `root_b` go together")),
    }
}

/// The family, evaluated at every grid point up front so template errors
/// surface with field names before any simulation starts.
pub fn build_sequence(s: &ConvergeSpec) -> CliResult<SamplerSequence> {
    for &n in &s.n_grid {
        s.family.instantiate::<BranchingVectorSampler>(Some(n), "family")?;
        if let Some(rf) = &s.root_family {
            rf.instantiate::<RootSampler>(Some(n), "root_family")?;
        }
        if let Some(d) = &s.declared_d1 {
            let v = eval_expr(d, Some(n)).map_err(|m| CliError::field("declared_d1", m))?;
            if v < 0.0 {
                return Err(CliError::field("declared_d1", format!("negative at n = {n}")));
            }
        }
    }
    let limit: BranchingVectorSampler = s.limit.instantiate(None, "limit")?;
    let family = s.family.clone();
    let mut seq = SamplerSequence::new(
        Arc::new(move |n| {
            family
                .instantiate(Some(n), "family")
                .map_err(|e| wbt_core::Error::InvalidSampler(e.to_string()))
        }),
        limit,
    )?;
    match (&s.root_family, &s.root_limit) {
        (None, None) => {}
        (Some(rf), Some(rl)) => {
            let rf = rf.clone();
            seq = seq.with_roots(
                Arc::new(move |n| {
                    rf.instantiate(Some(n), "root_family")
                        .map_err(|e| wbt_core::Error::InvalidSampler(e.to_string()))
                }),
                rl.instantiate(None, "root_limit")?,
            )?;
        }
        _ => return Err(CliError::field("root_family", "`root_family` and `root_limit` go together")),
    }
    if let Some(d) = &s.declared_d1 {
        let d = d.clone();
        seq = seq.with_declared_d1(Arc::new(move |n| eval_expr(&d, Some(n)).unwrap_or(f64::NAN)));
    }
    Ok(seq)
}

fn converge(s: &ConvergeSpec, key: StreamKey, sink: &mut RowSink) -> CliResult<()> {
    let seq = build_sequence(s)?;
    let budget = Budget {
        n_samples: s.n_samples,
        reps: s.reps,
        node_cap: s.node_cap,
    };
    match &s.test {
        ConvergeTest::FixedLevel { process, level } => {
            let curve = fixed_level_convergence(&seq, *process, *level, &s.n_grid, &budget, key)?;
            for &n in &s.n_grid {
                if let Ok(d) = seq.d1_mu(n) {
                    sink.exact(At::n(n), "d1_mu", d);
                }
            }
            sink.curve("d1", &curve)?;
        }
        ConvergeTest::Martingale {
            schedule,
            proxy_depth,
            mean_one,
        } => {
            let depth = proxy_depth.unwrap_or(DEFAULT_PROXY_DEPTH);
            let rep = scaled_martingale_convergence(&seq, schedule, &s.n_grid, &budget, depth, *mean_one, key)?;
            sink.exact(At::j(rep.proxy_depth), "proxy_depth", rep.proxy_depth as f64);
            sink.curve("ks_own", &rep.ks_own)?;
            sink.curve("ks_limit", &rep.ks_limit)?;
            if let Some(d) = &rep.d1_own {
                sink.curve("d1_own", d)?;
            }
            for &(n, gap, slack) in &rep.power_bound {
                sink.push(At::n(n), "power_gap_max", gap, 0.0, MC);
                sink.push(At::n(n), "power_bound_slack_min", slack, 0.0, MC);
            }
            sink.flag(At::default(), "power_bound_holds", rep.power_bound_holds());
            premise_rows(sink, &rep.premise);
        }
        ConvergeTest::RLimit { schedule, eps } => {
            let rep = r_limit_convergence(&seq, schedule, *eps, &s.n_grid, &budget, key)?;
            sink.curve("d1", &rep.curve)?;
            for &(n, m, rho_n) in &rep.means {
                sink.mean(At::n(n), "r_mean", m, MC);
                sink.exact(At::n(n), "rho_n", rho_n);
            }
            for &(n, t) in &rep.tail_slack {
                sink.exact(At::n(n), "limit_tail_at_level", t);
            }
            sink.exact(At::j(rep.limit_level), "limit_tail", rep.limit_tail);
            premise_rows(sink, &check_schedule_premise(&seq, schedule, &s.n_grid)?);
        }
        ConvergeTest::Lemma => {
            let rep = lemma_condition_check(&seq, &s.n_grid)?;
            for r in &rep.rows {
                let at = At::n(r.n);
                sink.exact(at, "d1_nu", r.d1_nu);
                sink.exact(at, "mean_abs_cq", r.mean_abs_cq);
                sink.exact(at, "mean_abs_c_n", r.mean_abs_c_n);
                sink.exact(at, "d1_mu", r.d1_mu);
            }
            sink.exact(At::default(), "limit_mean_abs_cq", rep.limit_mean_abs_cq);
            sink.exact(At::default(), "limit_mean_abs_c_n", rep.limit_mean_abs_c_n);
            sink.flag(At::default(), "hypotheses_hold", rep.hypotheses_hold);
            sink.flag(At::default(), "mu_converges", rep.mu_converges);
        }
    }
    Ok(())
}

fn premise_rows(sink: &mut RowSink, p: &wbt_core::convergence::PremiseCheck) {
    for &(n, j, jd_mu, jd_root) in &p.rows {
        let at = At::nj(n, j);
        sink.exact(at, "j_d1_mu", jd_mu);
        sink.exact(at, "j_d1_root", jd_root);
    }
    sink.flag(At::default(), "premise_holds", p.holds);
}

pub fn load_degrees(s: &RankSpec, dir: &Path, key: StreamKey) -> CliResult<BiDegreeSequence> {
    match &s.degrees {
        DegreeSource::File { path } => {
            let path = dir.join(path);
            let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
            Ok(BiDegreeSequence::parse(&text)?)
        }
        DegreeSource::Sampled { in_law, out_law, n } => Ok(BiDegreeSequence::sample_balanced(in_law, out_law, *n, key)?),
    }
}

// stream tags within a rank experiment
const TAG_DEGREES: u64 = 1;
const TAG_REPS: u64 = 2;

fn rank(s: &RankSpec, dir: &Path, key: StreamKey, sink: &mut RowSink) -> CliResult<()> {
    let ds = load_degrees(s, dir, key.fork(TAG_DEGREES))?;
    let reps: Vec<_> = (0..s.reps)
        .into_par_iter()
        .map(|r| rank_vs_wbt(&ds, s.damping, s.k, s.n_samples, key.fork(TAG_REPS).child(r as u64)))
        .collect::<wbt_core::Result<_>>()?;
    let pick = |f: fn(&wbt_core::graphs::RankComparison) -> f64| reps.iter().map(f).collect::<Vec<f64>>();
    let at = At::j(s.k);
    sink.replications(at, "d1_rank_tree", &pick(|c| c.d1));
    sink.replications(at, "d1_tree_baseline", &pick(|c| c.baseline));
    sink.replications(at, "rank_mean", &pick(|c| c.rank_mean.mean));
    sink.replications(at, "tree_mean", &pick(|c| c.tree_mean.mean));
    sink.exact(At::default(), "dangling_nodes", reps[0].dangling_nodes as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_keys_depend_on_id_and_seed() {
        assert_eq!(experiment_key(1, "a"), experiment_key(1, "a"));
        assert_ne!(experiment_key(1, "a"), experiment_key(1, "b"));
        assert_ne!(experiment_key(1, "a"), experiment_key(2, "a"));
    }
}
