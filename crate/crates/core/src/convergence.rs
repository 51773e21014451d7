//! Sequences of branching laws mu_n -> mu and the processes they drive.
//!
//! Every Monte Carlo curve is a list of per-replication statistics at each n
//! of the grid, next to a same-law baseline; "tends to zero" is judged by
//! [`trend_test`] on the medians.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{
    endogenous_r_sample, grow, homogeneous_w, r_process, BranchingVectorSampler, GrowOptions, Mode,
    RootSampler, TailBound, VectorLaw, WeightRule,
};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::measures::{d1_empirical_l1, d1_finite_vectors, d1_sorted_samples, ks_two_sample, EmpiricalMeasure, WeightedPoint};
use crate::stats::{mean_se, median, trend_test, MeanSe, TrendVerdict};
use crate::stream::StreamKey;

/// Largest number of atoms enumerated per law for exact vector d1.
pub const ATOM_CAP: usize = 512;
/// Default depth of the limit proxy W^(J) / rho^J.
pub const DEFAULT_PROXY_DEPTH: usize = 14;

pub type SamplerFamily = Arc<dyn Fn(u64) -> Result<BranchingVectorSampler> + Send + Sync>;
pub type RootFamily = Arc<dyn Fn(u64) -> Result<RootSampler> + Send + Sync>;
pub type DeclaredD1 = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// mu_n for n in a grid together with the limit mu (and root laws in WBT).
#[derive(Clone)]
pub struct SamplerSequence {
    family: SamplerFamily,
    limit: BranchingVectorSampler,
    root_family: Option<RootFamily>,
    root_limit: Option<RootSampler>,
    declared_d1: Option<DeclaredD1>,
}

impl fmt::Debug for SamplerSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerSequence")
            .field("limit", &self.limit)
            .field("root_limit", &self.root_limit)
            .finish_non_exhaustive()
    }
}

impl SamplerSequence {
    pub fn new(family: SamplerFamily, limit: BranchingVectorSampler) -> Result<Self> {
        limit.validate()?;
        Ok(Self {
            family,
            limit,
            root_family: None,
            root_limit: None,
            declared_d1: None,
        })
    }

    /// mu_n = mu for every n.
    pub fn constant(limit: BranchingVectorSampler) -> Result<Self> {
        let l = limit.clone();
        Self::new(Arc::new(move |_| Ok(l.clone())), limit)
    }

    pub fn with_roots(mut self, family: RootFamily, limit: RootSampler) -> Result<Self> {
        if self.limit.mode != Mode::Wbt {
            return Err(Error::InvalidSampler("root laws need WBT mode".into()));
        }
        limit.validate()?;
        self.root_family = Some(family);
        self.root_limit = Some(limit);
        Ok(self)
    }

    /// Analytic d1(mu_n, mu), used in place of enumeration when given.
    pub fn with_declared_d1(mut self, d1: DeclaredD1) -> Self {
        self.declared_d1 = Some(d1);
        self
    }

    pub fn mode(&self) -> Mode {
        self.limit.mode
    }

    pub fn limit(&self) -> &BranchingVectorSampler {
        &self.limit
    }

    pub fn root_limit(&self) -> Option<&RootSampler> {
        self.root_limit.as_ref()
    }

    pub fn at(&self, n: u64) -> Result<BranchingVectorSampler> {
        let s = (self.family)(n)?;
        s.validate()?;
        if s.mode != self.limit.mode {
            return Err(Error::InvalidSampler(format!("element {n} has a different mode")));
        }
        Ok(s)
    }

    pub fn root_at(&self, n: u64) -> Result<Option<RootSampler>> {
        self.root_family
            .as_ref()
            .map(|f| {
                let r = f(n)?;
                r.validate()?;
                Ok(r)
            })
            .transpose()
    }

    /// d1(mu_n, mu) on the induced vector laws: declared, else exact.
    pub fn d1_mu(&self, n: u64) -> Result<f64> {
        match &self.declared_d1 {
            Some(f) => Ok(f(n)),
            None => d1_vector_laws(&induced_atoms(&self.at(n)?)?, &induced_atoms(&self.limit)?),
        }
    }

    /// d1 between the root laws (nu_n*, nu*), exact; 0 without root laws.
    pub fn d1_root(&self, n: u64) -> Result<f64> {
        match (self.root_at(n)?, &self.root_limit) {
            (Some(a), Some(b)) => d1_vector_laws(&root_atoms(&a)?, &root_atoms(b)?),
            _ => Ok(0.0),
        }
    }
}

/// Level schedule j_n (or k_n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Fixed { level: usize },
    /// floor(scale ln n) + offset
    Log { scale: f64, offset: usize },
    /// floor(ln ln n) + offset, with ln ln n read as 0 for n < e^e
    LogLog { offset: usize },
    /// max(1, floor(coef n^exponent))
    Power { coef: f64, exponent: f64 },
}

impl Schedule {
    pub fn at(&self, n: u64) -> usize {
        let x = n.max(1) as f64;
        match *self {
            Self::Fixed { level } => level,
            Self::Log { scale, offset } => (scale * x.ln()).max(0.0).floor() as usize + offset,
            Self::LogLog { offset } => {
                let ll = if x > 1.0 { x.ln().ln() } else { 0.0 };
                ll.max(0.0).floor() as usize + offset
            }
            Self::Power { coef, exponent } => ((coef * x.powf(exponent)).floor() as usize).max(1),
        }
    }
}

/// Per-replication statistics over an n grid, plus a same-law baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: u64,
    pub level: usize,
    pub reps: Vec<f64>,
}

impl CurvePoint {
    pub fn median(&self) -> f64 {
        median(&self.reps)
    }

    pub fn mean_se(&self) -> MeanSe {
        mean_se(&self.reps)
    }
}

impl Curve {
    /// Trend verdict between the smallest and largest n of the grid.
    pub fn trend(&self) -> Result<TrendVerdict> {
        let (first, last) = match (self.points.first(), self.points.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Empty("curve".into())),
        };
        let base = (!self.baseline.is_empty()).then_some(self.baseline.as_slice());
        Ok(trend_test(&first.reps, &last.reps, base))
    }
}

/// Monte Carlo budget shared by the curve experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Trees per side per replication.
    pub n_samples: usize,
    pub reps: usize,
    pub node_cap: usize,
}

impl Budget {
    fn opts(&self) -> GrowOptions {
        GrowOptions {
            cap: self.node_cap,
            retain: false,
        }
    }
}

/// Which process value a tree contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    W,
    R,
    /// Sum of path weights over a generation (Q read as 1).
    HomogeneousW,
}

fn process_value(s: &BranchingVectorSampler, root: Option<&RootSampler>, p: Process, level: usize, opts: GrowOptions, key: StreamKey) -> Result<f64> {
    let tree = grow(s, root, level, opts, key)?;
    match p {
        Process::W => Ok(tree.levels[level].w),
        Process::R => r_process(&tree, level),
        Process::HomogeneousW => homogeneous_w(&tree, level),
    }
}

fn sample(
    s: &BranchingVectorSampler,
    root: Option<&RootSampler>,
    p: Process,
    level: usize,
    budget: &Budget,
    key: StreamKey,
) -> Result<Vec<f64>> {
    (0..budget.n_samples)
        .map(|i| process_value(s, root, p, level, budget.opts(), key.child(i as u64)))
        .collect()
}

// stream tags separating the roles a tree can play
const TAG_FAMILY: u64 = 1;
const TAG_LIMIT: u64 = 2;
const TAG_BASE_A: u64 = 3;
const TAG_BASE_B: u64 = 4;
const TAG_PROXY: u64 = 5;

fn grid_cells(n_grid: &[u64], reps: usize) -> Vec<(usize, u64, usize)> {
    n_grid
        .iter()
        .enumerate()
        .flat_map(|(g, &n)| (0..reps).map(move |r| (g, n, r)))
        .collect()
}

fn check_grid(n_grid: &[u64], budget: &Budget) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid".into()));
    }
    if budget.n_samples == 0 || budget.reps == 0 {
        return Err(Error::Domain("budget needs at least one sample and one replication".into()));
    }
    Ok(())
}

/// d1 between W^(n,j) (or R^(n,k)) and its limit at a fixed level, from
/// independent samples of `n_samples` trees per side.
pub fn fixed_level_convergence(
    seq: &SamplerSequence,
    process: Process,
    level: usize,
    n_grid: &[u64],
    budget: &Budget,
    key: StreamKey,
) -> Result<Curve> {
    check_grid(n_grid, budget)?;
    let laws: Vec<_> = n_grid
        .iter()
        .map(|&n| Ok((seq.at(n)?, seq.root_at(n)?)))
        .collect::<Result<_>>()?;
    let lim = (seq.limit(), seq.root_limit());
    let cells = grid_cells(n_grid, budget.reps);
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(g, n, r)| {
            let (s, root) = &laws[g];
            let a = sample(s, root.as_ref(), process, level, budget, key.fork(TAG_FAMILY).child(n).child(r as u64))?;
            let b = sample(lim.0, lim.1, process, level, budget, key.fork(TAG_LIMIT).child(n).child(r as u64))?;
            d1_sorted_samples(&a, &b)
        })
        .collect::<Result<_>>()?;
    let baseline = (0..budget.reps)
        .into_par_iter()
        .map(|r| {
            let a = sample(lim.0, lim.1, process, level, budget, key.fork(TAG_BASE_A).child(r as u64))?;
            let b = sample(lim.0, lim.1, process, level, budget, key.fork(TAG_BASE_B).child(r as u64))?;
            d1_sorted_samples(&a, &b)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(n_grid, budget.reps, |_| level, values, baseline))
}

fn assemble(n_grid: &[u64], reps: usize, level: impl Fn(u64) -> usize, values: Vec<f64>, baseline: Vec<f64>) -> Curve {
    Curve {
        points: n_grid
            .iter()
            .zip(values.chunks(reps))
            .map(|(&n, c)| CurvePoint {
                n,
                level: level(n),
                reps: c.to_vec(),
            })
            .collect(),
        baseline,
    }
}

/// Numerical check of j_n d1(mu_n, mu) -> 0 (and j_n d1(nu_n*, nu*) -> 0 in WBT).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PremiseCheck {
    /// (n, j_n, j_n d1(mu_n, mu), j_n d1(root_n, root)).
    pub rows: Vec<(u64, usize, f64, f64)>,
    /// Both products at the largest n are at most half their value at the
    /// smallest n, or are zero.
    pub holds: bool,
}

pub fn check_schedule_premise(seq: &SamplerSequence, schedule: &Schedule, n_grid: &[u64]) -> Result<PremiseCheck> {
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid".into()));
    }
    let rows: Vec<_> = n_grid
        .iter()
        .map(|&n| {
            let j = schedule.at(n) as f64;
            Ok((n, schedule.at(n), j * seq.d1_mu(n)?, j * seq.d1_root(n)?))
        })
        .collect::<Result<_>>()?;
    let shrinks = |first: f64, last: f64| last <= 1e-12 || last <= 0.5 * first;
    // Halving from the midpoint to the last n: a sequence settling at a
    // positive value stops shrinking over the upper half of the grid.
    let (f, l) = (rows[rows.len() / 2], rows[rows.len() - 1]);
    let holds = shrinks(f.2, l.2) && shrinks(f.3, l.3);
    Ok(PremiseCheck { rows, holds })
}

/// Output of [`scaled_martingale_convergence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    /// KS(W^(n,j_n) / rho_n^j_n, proxy).
    pub ks_own: Curve,
    /// KS(W^(n,j_n) / rho^j_n, proxy).
    pub ks_limit: Curve,
    /// d1 versions, reported only when E[W] = 1 is declared.
    pub d1_own: Option<Curve>,
    pub proxy_depth: usize,
    /// Per n: (max over samples of the gap between the two normalisations,
    /// smallest slack left by the power bound), slack >= 0 when it holds.
    pub power_bound: Vec<(u64, f64, f64)>,
    pub premise: PremiseCheck,
}

impl MartingaleReport {
    pub fn power_bound_holds(&self) -> bool {
        self.power_bound.iter().all(|r| r.2 >= 0.0)
    }
}

/// Normalised homogeneous W^(n, j_n) against a deep-level proxy of the limit.
#[allow(clippy::too_many_arguments)]
pub fn scaled_martingale_convergence(
    seq: &SamplerSequence,
    schedule: &Schedule,
    n_grid: &[u64],
    budget: &Budget,
    proxy_depth: usize,
    mean_one_declared: bool,
    key: StreamKey,
) -> Result<MartingaleReport> {
    check_grid(n_grid, budget)?;
    let lim = seq.limit();
    if !lim.has_unit_marks() || !lim.weights_nonnegative() {
        return Err(Error::InvalidSampler("the limit needs Q = 1 and nonnegative weights".into()));
    }
    let rho = lim.moments()?.rho;
    let laws: Vec<_> = n_grid
        .iter()
        .map(|&n| {
            let s = seq.at(n)?;
            if !s.has_unit_marks() || !s.weights_nonnegative() {
                return Err(Error::InvalidSampler(format!("element {n} needs Q = 1 and nonnegative weights")));
            }
            let rho_n = s.moments()?.rho;
            Ok((s, seq.root_at(n)?, rho_n))
        })
        .collect::<Result<_>>()?;
    let premise = check_schedule_premise(seq, schedule, n_grid)?;

    let proxies: Vec<Vec<f64>> = (0..budget.reps)
        .into_par_iter()
        .map(|r| {
            let w = sample(lim, seq.root_limit(), Process::HomogeneousW, proxy_depth, budget, key.fork(TAG_PROXY).child(r as u64))?;
            Ok(w.into_iter().map(|x| x / rho.powi(proxy_depth as i32)).collect())
        })
        .collect::<Result<_>>()?;

    struct Cell {
        ks_own: f64,
        ks_limit: f64,
        d1_own: f64,
        gap: f64,
        slack: f64,
    }
    let cells = grid_cells(n_grid, budget.reps);
    let out: Vec<Cell> = cells
        .par_iter()
        .map(|&(g, n, r)| {
            let (s, root, rho_n) = &laws[g];
            let j = schedule.at(n);
            let w = sample(s, root.as_ref(), Process::HomogeneousW, j, budget, key.fork(TAG_FAMILY).child(n).child(r as u64))?;
            let own: Vec<f64> = w.iter().map(|x| x / rho_n.powi(j as i32)).collect();
            let by_limit: Vec<f64> = w.iter().map(|x| x / rho.powi(j as i32)).collect();
            let pb = power_bounds(rho / rho_n, j.max(1));
            let mut gap: f64 = 0.0;
            let mut slack = f64::INFINITY;
            for (a, b) in own.iter().zip(&by_limit) {
                // own = by_limit (rho/rho_n)^j
                let g = (a - b).abs();
                gap = gap.max(g);
                slack = slack.min(b * pb.rhs2 - g);
            }
            if j == 0 {
                slack = 0.0;
            }
            let proxy = &proxies[r];
            Ok(Cell {
                ks_own: ks_two_sample(&own, proxy)?,
                ks_limit: ks_two_sample(&by_limit, proxy)?,
                d1_own: if mean_one_declared { d1_sorted_samples(&own, proxy)? } else { 0.0 },
                gap,
                slack,
            })
        })
        .collect::<Result<_>>()?;

    // baseline: the same pipeline with mu_n = mu at the largest n's level
    let j_last = schedule.at(*n_grid.last().unwrap());
    let base: Vec<(f64, f64)> = (0..budget.reps)
        .into_par_iter()
        .map(|r| {
            let w = sample(lim, seq.root_limit(), Process::HomogeneousW, j_last, budget, key.fork(TAG_BASE_A).child(r as u64))?;
            let v: Vec<f64> = w.iter().map(|x| x / rho.powi(j_last as i32)).collect();
            let proxy = &proxies[r];
            Ok((ks_two_sample(&v, proxy)?, if mean_one_declared { d1_sorted_samples(&v, proxy)? } else { 0.0 }))
        })
        .collect::<Result<_>>()?;

    let lvl = |n| schedule.at(n);
    let reps = budget.reps;
    let power_bound = n_grid
        .iter()
        .zip(out.chunks(reps))
        .map(|(&n, c)| {
            (
                n,
                c.iter().map(|x| x.gap).fold(0.0, f64::max),
                c.iter().map(|x| x.slack).fold(f64::INFINITY, f64::min),
            )
        })
        .collect();
    let base_ks: Vec<f64> = base.iter().map(|b| b.0).collect();
    Ok(MartingaleReport {
        ks_own: assemble(n_grid, reps, lvl, out.iter().map(|c| c.ks_own).collect(), base_ks.clone()),
        ks_limit: assemble(n_grid, reps, lvl, out.iter().map(|c| c.ks_limit).collect(), base_ks),
        d1_own: mean_one_declared.then(|| {
            assemble(n_grid, reps, lvl, out.iter().map(|c| c.d1_own).collect(), base.iter().map(|b| b.1).collect())
        }),
        proxy_depth,
        power_bound,
        premise,
    })
}

/// Output of [`r_limit_convergence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RLimitReport {
    /// d1(R^(n,k_n), endogenous R of the limit).
    pub curve: Curve,
    /// Per n: mean and SE of R^(n,k_n) over all samples, and rho_n.
    pub means: Vec<(u64, MeanSe, f64)>,
    /// Per n: the limit's tail bound at k_n.
    pub tail_slack: Vec<(u64, f64)>,
    /// Level and tail bound of the limit's endogenous samples.
    pub limit_level: usize,
    pub limit_tail: f64,
}

/// R^(n,k_n) against endogenous samples of the limit (truncated at `eps`).
pub fn r_limit_convergence(
    seq: &SamplerSequence,
    schedule: &Schedule,
    eps: f64,
    n_grid: &[u64],
    budget: &Budget,
    key: StreamKey,
) -> Result<RLimitReport> {
    check_grid(n_grid, budget)?;
    let lim = seq.limit();
    let tail = TailBound::new(lim, seq.root_limit())?;
    let limit_level = tail.level_for(eps)?;
    let laws: Vec<_> = n_grid
        .iter()
        .map(|&n| {
            let s = seq.at(n)?;
            let rho_n = s.moments()?.rho;
            Ok((s, seq.root_at(n)?, rho_n))
        })
        .collect::<Result<_>>()?;
    let endo = |k: StreamKey| -> Result<Vec<f64>> {
        (0..budget.n_samples)
            .map(|i| endogenous_r_sample(lim, seq.root_limit(), eps, budget.opts(), k.child(i as u64)).map(|t| t.0))
            .collect()
    };
    let cells = grid_cells(n_grid, budget.reps);
    let out: Vec<(f64, Vec<f64>)> = cells
        .par_iter()
        .map(|&(g, n, r)| {
            let (s, root, _) = &laws[g];
            let a = sample(s, root.as_ref(), Process::R, schedule.at(n), budget, key.fork(TAG_FAMILY).child(n).child(r as u64))?;
            let b = endo(key.fork(TAG_LIMIT).child(n).child(r as u64))?;
            Ok((d1_sorted_samples(&a, &b)?, a))
        })
        .collect::<Result<_>>()?;
    let baseline = (0..budget.reps)
        .into_par_iter()
        .map(|r| {
            let a = endo(key.fork(TAG_BASE_A).child(r as u64))?;
            let b = endo(key.fork(TAG_BASE_B).child(r as u64))?;
            d1_sorted_samples(&a, &b)
        })
        .collect::<Result<_>>()?;
    let reps = budget.reps;
    let means = n_grid
        .iter()
        .zip(out.chunks(reps))
        .zip(&laws)
        .map(|((&n, c), law)| {
            let all: Vec<f64> = c.iter().flat_map(|x| x.1.iter().copied()).collect();
            (n, mean_se(&all), law.2)
        })
        .collect();
    Ok(RLimitReport {
        curve: assemble(n_grid, reps, |n| schedule.at(n), out.iter().map(|x| x.0).collect(), baseline),
        means,
        tail_slack: n_grid.iter().map(|&n| (n, tail.at(schedule.at(n)))).collect(),
        limit_level,
        limit_tail: tail.at(limit_level),
    })
}

/// E[R] of the endogenous solution for composed laws with nonnegative i.i.d.
/// weights, where Q is independent of the weights.
pub fn analytic_r_mean(s: &BranchingVectorSampler, root: Option<&RootSampler>) -> Option<f64> {
    let VectorLaw::Composed { q, c: WeightRule::Iid { dist }, .. } = &s.law else {
        return None;
    };
    if !s.weights_nonnegative() {
        return None;
    }
    let rho = s.moments().ok()?.rho;
    if rho >= 1.0 {
        return None;
    }
    match s.mode {
        Mode::Wbp => Some(q.mean()? / (1.0 - rho)),
        Mode::Wbt => {
            let (q_root, n_root) = match root {
                Some(RootSampler::Composed { q, n }) => (q.mean()?, n.mean()?),
                Some(RootSampler::Table { rows }) => (
                    rows.iter().map(|r| r.0 * r.1).sum(),
                    rows.iter().map(|r| r.0 * r.2 as f64).sum(),
                ),
                None => (q.mean()?, s.moments().ok()?.mean_n),
            };
            Some(q_root + n_root * q.mean()? * dist.mean()? / (1.0 - rho))
        }
    }
}

/// One n of [`lemma_condition_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaRow {
    pub n: u64,
    /// d1 between the generic (Q, N, C) laws.
    pub d1_nu: f64,
    pub mean_abs_cq: f64,
    /// E[|C| N].
    pub mean_abs_c_n: f64,
    /// d1 between the induced vector laws (CQ, C 1(N >= 1), C 1(N >= 2), ...).
    pub d1_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub limit_mean_abs_cq: f64,
    pub limit_mean_abs_c_n: f64,
    /// The three hypotheses shrink over the upper half of the grid.
    pub hypotheses_hold: bool,
    /// d1(mu_n, mu) shrinks over the upper half of the grid.
    pub mu_converges: bool,
}

/// Evaluates the hypotheses on a WBT sequence and d1(mu_n, mu) itself, both
/// exactly on enumerated atoms.
pub fn lemma_condition_check(seq: &SamplerSequence, n_grid: &[u64]) -> Result<LemmaReport> {
    if seq.mode() != Mode::Wbt {
        return Err(Error::InvalidSampler("the lemma concerns weighted branching trees".into()));
    }
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid".into()));
    }
    let lim = seq.limit();
    let lm = lim.moments()?;
    let lim_cq = lm.mean_abs_cq.ok_or_else(|| Error::MomentUnavailable("E|CQ|".into()))?;
    let lim_generic = generic_atoms(lim)?;
    let lim_induced = induced_atoms(lim)?;
    let rows: Vec<LemmaRow> = n_grid
        .iter()
        .map(|&n| {
            let s = seq.at(n)?;
            let m = s.moments()?;
            Ok(LemmaRow {
                n,
                d1_nu: d1_vector_laws(&generic_atoms(&s)?, &lim_generic)?,
                mean_abs_cq: m.mean_abs_cq.ok_or_else(|| Error::MomentUnavailable("E|CQ|".into()))?,
                mean_abs_c_n: m.rho,
                d1_mu: d1_vector_laws(&induced_atoms(&s)?, &lim_induced)?,
            })
        })
        .collect::<Result<_>>()?;
    let shrinks = |f: f64, l: f64| l <= 1e-12 || l <= 0.5 * f;
    // Halving from the midpoint to the last n: a sequence settling at a
    // positive value stops shrinking over the upper half of the grid.
    let (f, l) = (rows[rows.len() / 2], rows[rows.len() - 1]);
    let hypotheses_hold = shrinks(f.d1_nu, l.d1_nu)
        && shrinks((f.mean_abs_cq - lim_cq).abs(), (l.mean_abs_cq - lim_cq).abs())
        && shrinks((f.mean_abs_c_n - lm.rho).abs(), (l.mean_abs_c_n - lm.rho).abs());
    Ok(LemmaReport {
        rows,
        limit_mean_abs_cq: lim_cq,
        limit_mean_abs_c_n: lm.rho,
        hypotheses_hold,
        mu_converges: shrinks(f.d1_mu, l.d1_mu),
    })
}

/// The two inequalities (x v 1)^j <= e^{j (x-1)^+} and
/// |x^j - 1| <= j |x - 1| e^{(j-1)(x-1)^+}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBounds {
    pub lhs1: f64,
    pub rhs1: f64,
    pub lhs2: f64,
    pub rhs2: f64,
}

impl PowerBounds {
    pub fn holds(&self) -> bool {
        self.lhs1 <= self.rhs1 && self.lhs2 <= self.rhs2
    }
}

/// The first pair is compared in log space. The second uses
/// |x^j - 1| = |x - 1| (1 + x + ... + x^{j-1}) so both sides share the
/// factor |x - 1| and the equality at j = 1 survives rounding.
pub fn power_bounds(x: f64, j: usize) -> PowerBounds {
    let jf = j as f64;
    let up = (x - 1.0).max(0.0);
    let dist = (x - 1.0).abs();
    let mut geometric = 0.0;
    let mut term = 1.0;
    for _ in 0..j {
        geometric += term;
        term *= x;
    }
    PowerBounds {
        lhs1: (jf * up.ln_1p()).exp(),
        rhs1: (jf * up).exp(),
        lhs2: dist * geometric,
        rhs2: dist * (jf * ((jf - 1.0) * up).exp()),
    }
}

fn product_atoms(q: &Dist, n: &Dist, f: impl Fn(f64, usize, &mut Vec<(Vec<f64>, f64)>) -> Result<()>) -> Result<Vec<WeightedPoint>> {
    let (qm, nm) = (
        q.as_discrete().ok_or_else(|| infinite())?,
        n.as_discrete().ok_or_else(|| infinite())?,
    );
    let mut out = Vec::new();
    for (qv, qp) in qm.atoms() {
        for (nv, np) in nm.atoms() {
            let mut tail = Vec::new();
            f(qv, nv as usize, &mut tail)?;
            for (pt, p) in tail {
                out.push(WeightedPoint::new(pt, qp * np * p));
            }
            if out.len() > ATOM_CAP {
                return Err(Error::ExactRegimeExceeded { n: out.len(), n_max: ATOM_CAP });
            }
        }
    }
    Ok(out)
}

fn infinite() -> Error {
    Error::ExactRegimeExceeded { n: usize::MAX, n_max: ATOM_CAP }
}

fn weight_measure(rule: &WeightRule, n: usize) -> Result<crate::measures::DiscreteMeasure> {
    match rule {
        WeightRule::Fixed { .. } => Err(Error::InvalidSampler("fixed weights are a WBP rule".into())),
        WeightRule::Iid { dist } => dist.as_discrete().ok_or_else(infinite),
        WeightRule::ByN { table, default } => table
            .iter()
            .find(|(k, _)| *k as usize == n)
            .map_or(default, |(_, d)| d)
            .as_discrete()
            .ok_or_else(infinite),
    }
}

/// Atoms of the induced vector law: WBP (Q, C_1 1(N >= 1), C_2 1(N >= 2), ...),
/// WBT (CQ, C 1(N >= 1), C 1(N >= 2), ...).
pub fn induced_atoms(s: &BranchingVectorSampler) -> Result<Vec<WeightedPoint>> {
    match (&s.law, s.mode) {
        (VectorLaw::Table { rows }, mode) => Ok(rows
            .iter()
            .filter(|r| r.prob > 0.0)
            .map(|r| {
                let pt = match mode {
                    Mode::Wbp => std::iter::once(r.q).chain(r.c.iter().copied()).collect(),
                    Mode::Wbt => std::iter::once(r.c[0] * r.q).chain(std::iter::repeat_n(r.c[0], r.n)).collect(),
                };
                WeightedPoint::new(pt, r.prob)
            })
            .collect()),
        (VectorLaw::Composed { q, n, c }, Mode::Wbt) => product_atoms(q, n, |qv, nv, out| {
            for (cv, cp) in weight_measure(c, nv)?.atoms() {
                out.push((std::iter::once(cv * qv).chain(std::iter::repeat_n(cv, nv)).collect(), cp));
            }
            Ok(())
        }),
        (VectorLaw::Composed { q, n, c }, Mode::Wbp) => product_atoms(q, n, |qv, nv, out| {
            // product over children of the per-child weight laws
            let mut partial: Vec<(Vec<f64>, f64)> = vec![(vec![qv], 1.0)];
            for i in 1..=nv {
                let law = match c {
                    WeightRule::Fixed { values } => {
                        crate::measures::DiscreteMeasure::dirac(values.get(i - 1).copied().unwrap_or(0.0))
                    }
                    rule => weight_measure(rule, nv)?,
                };
                let mut next = Vec::with_capacity(partial.len() * law.len());
                for (pt, p) in &partial {
                    for (cv, cp) in law.atoms() {
                        let mut v = pt.clone();
                        v.push(cv);
                        next.push((v, p * cp));
                    }
                }
                if next.len() > ATOM_CAP {
                    return Err(Error::ExactRegimeExceeded { n: next.len(), n_max: ATOM_CAP });
                }
                partial = next;
            }
            out.extend(partial);
            Ok(())
        }),
    }
}

/// Atoms of a WBT generic law as points (Q, N, C).
pub fn generic_atoms(s: &BranchingVectorSampler) -> Result<Vec<WeightedPoint>> {
    if s.mode != Mode::Wbt {
        return Err(Error::InvalidSampler("(Q, N, C) atoms are a WBT notion".into()));
    }
    match &s.law {
        VectorLaw::Table { rows } => Ok(rows
            .iter()
            .filter(|r| r.prob > 0.0)
            .map(|r| WeightedPoint::new(vec![r.q, r.n as f64, r.c[0]], r.prob))
            .collect()),
        VectorLaw::Composed { q, n, c } => product_atoms(q, n, |qv, nv, out| {
            for (cv, cp) in weight_measure(c, nv)?.atoms() {
                out.push((vec![qv, nv as f64, cv], cp));
            }
            Ok(())
        }),
    }
}

/// Atoms of a root law as points (Q, N).
pub fn root_atoms(r: &RootSampler) -> Result<Vec<WeightedPoint>> {
    match r {
        RootSampler::Table { rows } => Ok(rows
            .iter()
            .filter(|x| x.0 > 0.0)
            .map(|x| WeightedPoint::new(vec![x.1, x.2 as f64], x.0))
            .collect()),
        RootSampler::Composed { q, n } => product_atoms(q, n, |qv, nv, out| {
            out.push((vec![qv, nv as f64], 1.0));
            Ok(())
        }),
    }
}

/// Exact d1 between two atom lists; duplicate points are merged first.
pub fn d1_vector_laws(a: &[WeightedPoint], b: &[WeightedPoint]) -> Result<f64> {
    d1_finite_vectors(&merge(a), &merge(b))
}

fn merge(points: &[WeightedPoint]) -> Vec<WeightedPoint> {
    let mut sorted: Vec<&WeightedPoint> = points.iter().collect();
    sorted.sort_by(|x, y| {
        x.point
            .len()
            .cmp(&y.point.len())
            .then_with(|| x.point.iter().zip(&y.point).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut out: Vec<WeightedPoint> = Vec::new();
    for p in sorted {
        match out.last_mut() {
            Some(last) if last.point == p.point => last.weight += p.weight,
            _ => out.push(p.clone()),
        }
    }
    out
}

/// d1 between two vector laws from `n` draws each, by exact assignment; the
/// fallback when a law has too many atoms.
pub fn d1_vector_laws_sampled(a: &BranchingVectorSampler, b: &BranchingVectorSampler, n: usize, key: StreamKey) -> Result<f64> {
    let embed = |s: &BranchingVectorSampler, k: StreamKey| {
        let (q, nn, c) = s.draw(k);
        match s.mode {
            Mode::Wbp => std::iter::once(q).chain(c).collect::<Vec<f64>>(),
            Mode::Wbt => std::iter::once(c[0] * q).chain(std::iter::repeat_n(c[0], nn)).collect(),
        }
    };
    let xa: Vec<Vec<f64>> = (0..n).map(|i| embed(a, key.fork(1).child(i as u64))).collect();
    let xb: Vec<Vec<f64>> = (0..n).map(|i| embed(b, key.fork(2).child(i as u64))).collect();
    let dim = xa.iter().chain(&xb).map(Vec::len).max().unwrap_or(1).max(1);
    let pad = |v: Vec<Vec<f64>>| {
        v.into_iter()
            .map(|mut p| {
                p.resize(dim, 0.0);
                p
            })
            .collect::<Vec<_>>()
    };
    d1_empirical_l1(&EmpiricalMeasure::from_rows(pad(xa))?, &EmpiricalMeasure::from_rows(pad(xb))?, n)
}
