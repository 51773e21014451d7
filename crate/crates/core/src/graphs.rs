//! Configuration-model graphs, their breadth-first exploration and the
//! branching processes that approximate them.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::branching::{
    grow, r_process, BranchingVectorSampler, GrowOptions, Mode, RootSampler, Sharing, TableRow, WeightRule,
};
use crate::convergence::{Curve, CurvePoint, Schedule};
use crate::coupling::{grow_coupled, CoupledSampler, RootCoupling};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::measures::{d1_sorted_samples, DiscreteMeasure};
use crate::stats::{mean_se, MeanSe};
use crate::stream::StreamKey;

/// Degrees of an undirected configuration model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeSequence(pub Vec<u64>);

impl DegreeSequence {
    pub fn new(degrees: Vec<u64>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::InvalidDegrees("no nodes".into()));
        }
        Ok(Self(degrees))
    }

    /// One integer per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let degrees = data_lines(text)
            .map(|(i, l)| l.parse::<u64>().map_err(|e| Error::InvalidDegrees(format!("line {i}: {e}"))))
            .collect::<Result<_>>()?;
        Self::new(degrees)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// n i.i.d. degrees from a count law.
    pub fn sample(law: &Dist, n: usize, key: StreamKey) -> Result<Self> {
        if !law.is_count() {
            return Err(Error::InvalidDistribution("degrees need a count law".into()));
        }
        Self::new((0..n).map(|i| law.quantile(key.uniform(i)) as u64).collect())
    }
}

/// Paired in/out degrees of a directed configuration model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BiDegreeSequence {
    pub ins: Vec<u64>,
    pub outs: Vec<u64>,
}

impl BiDegreeSequence {
    pub fn new(ins: Vec<u64>, outs: Vec<u64>) -> Result<Self> {
        if ins.len() != outs.len() || ins.is_empty() {
            return Err(Error::InvalidDegrees("in and out lists must be nonempty and of equal length".into()));
        }
        let (a, b): (u64, u64) = (ins.iter().sum(), outs.iter().sum());
        if a != b {
            return Err(Error::InvalidDegrees(format!("in-degrees sum to {a}, out-degrees to {b}")));
        }
        Ok(Self { ins, outs })
    }

    /// One `in,out` pair per line (comma or whitespace separated).
    pub fn parse(text: &str) -> Result<Self> {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for (i, l) in data_lines(text) {
            let parts: Vec<&str> = l.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let [a, b] = parts[..] else {
                return Err(Error::InvalidDegrees(format!("line {i}: expected two integers")));
            };
            let p = |s: &str| s.parse::<u64>().map_err(|e| Error::InvalidDegrees(format!("line {i}: {e}")));
            ins.push(p(a)?);
            outs.push(p(b)?);
        }
        Self::new(ins, outs)
    }

    /// i.i.d. in- and out-degrees, then one unit at a time added to the
    /// smaller side at uniformly chosen nodes until the totals agree.
    pub fn sample_balanced(in_law: &Dist, out_law: &Dist, n: usize, key: StreamKey) -> Result<Self> {
        let ins = DegreeSequence::sample(in_law, n, key.fork(1))?.0;
        let outs = DegreeSequence::sample(out_law, n, key.fork(2))?.0;
        let (mut ins, mut outs) = (ins, outs);
        let mut rng = key.fork(3).rng();
        let (mut a, mut b): (u64, u64) = (ins.iter().sum(), outs.iter().sum());
        while a != b {
            let i = rng.random_range(0..n);
            if a < b {
                ins[i] += 1;
                a += 1;
            } else {
                outs[i] += 1;
                b += 1;
            }
        }
        Self::new(ins, outs)
    }

    pub fn len(&self) -> usize {
        self.ins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ins.is_empty()
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// A realized configuration model; directed edges run from the out-stub's
/// node to the in-stub's node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Multigraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub directed: bool,
}

impl Multigraph {
    pub fn is_simple(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        self.edges.iter().all(|&(a, b)| {
            let key = if self.directed { (a, b) } else { (a.min(b), a.max(b)) };
            a != b && seen.insert(key)
        })
    }

    /// Undirected degree (a self-loop counts twice) or (in, out) pairs.
    pub fn degrees(&self) -> Vec<(u64, u64)> {
        let mut d = vec![(0u64, 0u64); self.n];
        for &(a, b) in &self.edges {
            if self.directed {
                d[a].1 += 1;
                d[b].0 += 1;
            } else {
                d[a].0 += 1;
                d[b].0 += 1;
            }
        }
        d
    }

    /// Edge list, one `a b` pair per line, 0-based.
    pub fn to_edge_list(&self) -> String {
        self.edges.iter().map(|(a, b)| format!("{a} {b}\n")).collect()
    }

    /// Incidence lists (neighbor, edge id) for undirected graphs.
    fn incidence(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (id, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, id));
            adj[b].push((a, id));
        }
        adj
    }
}

/// Uniform pairing of half-edges; `simple_attempts` > 0 redraws until the
/// result has no self-loops or multi-edges, failing after that many tries.
pub fn config_model(ds: &DegreeSequence, simple_attempts: usize, key: StreamKey) -> Result<Multigraph> {
    if ds.total() % 2 == 1 {
        return Err(Error::InvalidDegrees(format!("total degree {} is odd", ds.total())));
    }
    let stubs: Vec<usize> = ds.0.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d as usize)).collect();
    let mut rng = key.rng();
    for _ in 0..simple_attempts.max(1) {
        let mut s = stubs.clone();
        s.shuffle(&mut rng);
        let g = Multigraph {
            n: ds.0.len(),
            edges: s.chunks(2).map(|p| (p[0], p[1])).collect(),
            directed: false,
        };
        if simple_attempts == 0 || g.is_simple() {
            return Ok(g);
        }
    }
    Err(Error::InvalidDegrees(format!("no simple graph in {simple_attempts} attempts")))
}

/// Uniform matching of out-stubs to in-stubs.
pub fn directed_config_model(ds: &BiDegreeSequence, key: StreamKey) -> Result<Multigraph> {
    let expand = |d: &[u64]| -> Vec<usize> { d.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect() };
    let outs = expand(&ds.outs);
    let mut ins = expand(&ds.ins);
    ins.shuffle(&mut key.rng());
    Ok(Multigraph {
        n: ds.len(),
        edges: outs.into_iter().zip(ins).collect(),
        directed: true,
    })
}

/// Generation sizes of a breadth-first exploration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExplorationTrace {
    /// Z~(0) = 1, Z~(j) = number of nodes at distance j.
    pub sizes: Vec<usize>,
    /// tree_like[j]: every forward edge explored from generation j - 1
    /// reached a node not seen before (entry 0 is always true).
    pub tree_like: Vec<bool>,
}

/// BFS on an undirected multigraph up to `max_depth`, stopping early when a
/// generation is empty.
pub fn bfs_exploration(g: &Multigraph, start: usize, max_depth: usize) -> Result<ExplorationTrace> {
    if start >= g.n {
        return Err(Error::Domain(format!("start node {start} not in a graph of {} nodes", g.n)));
    }
    if g.directed {
        return Err(Error::Domain("exploration is defined on undirected graphs".into()));
    }
    let adj = g.incidence();
    let mut seen = vec![false; g.n];
    let mut used_edge = vec![false; g.edges.len()];
    seen[start] = true;
    let mut frontier = vec![start];
    let mut sizes = vec![1];
    let mut tree_like = vec![true];
    for _ in 0..max_depth {
        let mut next = Vec::new();
        let mut clean = true;
        for &v in &frontier {
            for &(w, id) in &adj[v] {
                if used_edge[id] {
                    // the edge this node was discovered through, or one
                    // already explored from the other end
                    continue;
                }
                used_edge[id] = true;
                if seen[w] {
                    clean = false;
                } else {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        sizes.push(next.len());
        tree_like.push(clean);
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(ExplorationTrace { sizes, tree_like })
}

/// Lazy pairing exploration of a configuration model from a uniform start,
/// coupled with the delayed Galton-Watson tree (root offspring D, others
/// size-biased D - 1) drawn from the same half-edge choices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledExploration {
    pub graph: ExplorationTrace,
    pub gw: Vec<usize>,
    /// First generation in which the two processes may differ.
    pub first_collision: Option<usize>,
}

pub fn coupled_exploration(ds: &DegreeSequence, depth: usize, key: StreamKey) -> Result<CoupledExploration> {
    let l = ds.total() as usize;
    if l == 0 || l % 2 == 1 {
        return Err(Error::InvalidDegrees("need a positive even total degree".into()));
    }
    let owner: Vec<usize> = ds.0.iter().enumerate().flat_map(|(i, &d)| std::iter::repeat_n(i, d as usize)).collect();
    let first: Vec<usize> = ds.0.iter().scan(0usize, |acc, &d| {
        let s = *acc;
        *acc += d as usize;
        Some(s)
    }).collect();
    let mut rng = key.rng();
    let start = rng.random_range(0..ds.0.len());
    let mut paired = vec![false; l];
    let mut seen = vec![false; ds.0.len()];
    seen[start] = true;

    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Aligned,
        GraphOnly,
    }
    let half_edges = |v: usize, except: Option<usize>| (first[v]..first[v] + ds.0[v] as usize).filter(move |&h| Some(h) != except);
    let mut frontier: Vec<(usize, Kind)> = half_edges(start, None).map(|h| (h, Kind::Aligned)).collect();
    // GW individuals not represented in the graph: their offspring counts
    let mut orphans: Vec<usize> = Vec::new();
    let mut sizes = vec![1];
    let mut tree_like = vec![true];
    let mut gw = vec![1];
    let mut first_collision = None;

    let redraw = |rng: &mut rand_chacha::ChaCha8Rng, paired: &[bool], h: usize| -> Option<usize> {
        // uniform among unpaired half-edges other than h, by rejection while
        // enough are free, else by enumeration
        for _ in 0..64 {
            let y = rng.random_range(0..l);
            if y != h && !paired[y] {
                return Some(y);
            }
        }
        let free: Vec<usize> = (0..l).filter(|&y| y != h && !paired[y]).collect();
        (!free.is_empty()).then(|| free[rng.random_range(0..free.len())])
    };

    for g in 1..=depth {
        let mut next = Vec::new();
        let mut next_orphans = Vec::new();
        let mut graph_new = 0usize;
        let mut gw_new = 0usize;
        let mut clean = true;
        for &(h, kind) in &frontier {
            if kind == Kind::Aligned {
                let x = rng.random_range(0..l);
                gw_new += 1;
                let fresh = x != h && !paired[h] && !paired[x] && !seen[owner[x]];
                if fresh {
                    paired[h] = true;
                    paired[x] = true;
                    seen[owner[x]] = true;
                    graph_new += 1;
                    next.extend(half_edges(owner[x], Some(x)).map(|e| (e, Kind::Aligned)));
                    continue;
                }
                next_orphans.push(ds.0[owner[x]] as usize - 1);
                clean = false;
                first_collision.get_or_insert(g);
            }
            if paired[h] {
                if kind == Kind::GraphOnly {
                    clean = false;
                }
                continue;
            }
            let Some(y) = redraw(&mut rng, &paired, h) else { continue };
            paired[h] = true;
            paired[y] = true;
            if seen[owner[y]] {
                clean = false;
            } else {
                seen[owner[y]] = true;
                graph_new += 1;
                next.extend(half_edges(owner[y], Some(y)).map(|e| (e, Kind::GraphOnly)));
            }
        }
        for &c in &orphans {
            for _ in 0..c {
                let x = rng.random_range(0..l);
                gw_new += 1;
                next_orphans.push(ds.0[owner[x]] as usize - 1);
            }
        }
        if !clean {
            first_collision.get_or_insert(g);
        }
        sizes.push(graph_new);
        tree_like.push(clean);
        gw.push(gw_new);
        frontier = next;
        orphans = next_orphans;
    }
    Ok(CoupledExploration {
        graph: ExplorationTrace { sizes, tree_like },
        gw,
        first_collision,
    })
}

/// nu_n* (degree of a uniform node) and nu_n (residual degree of a uniform
/// half-edge's node), with exact integer numerators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeBiasedMeasures {
    pub nu_star: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    /// (degree, number of nodes with it), increasing in degree.
    pub counts: Vec<(u64, u64)>,
    pub n: u64,
    pub l_n: u64,
}

impl SizeBiasedMeasures {
    /// nu_n*({k}) = num / n as (k, num).
    pub fn nu_star_exact(&self) -> Vec<(u64, u64)> {
        self.counts.clone()
    }

    /// nu_n({k}) = num / L_n as (k, num).
    pub fn nu_exact(&self) -> Vec<(u64, u64)> {
        self.counts.iter().filter(|c| c.0 > 0).map(|&(d, c)| (d - 1, d * c)).collect()
    }
}

pub fn size_biased(ds: &DegreeSequence) -> Result<SizeBiasedMeasures> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &d in &ds.0 {
        *counts.entry(d).or_default() += 1;
    }
    let n = ds.0.len() as u64;
    let l_n = ds.total();
    if l_n == 0 {
        return Err(Error::InvalidDegrees("all degrees are zero, nu is undefined".into()));
    }
    let counts: Vec<(u64, u64)> = counts.into_iter().collect();
    let nu_star = DiscreteMeasure::from_weighted(counts.iter().map(|&(d, c)| (d as f64, c as f64 / n as f64)))?;
    let nu = DiscreteMeasure::from_weighted(
        counts.iter().filter(|c| c.0 > 0).map(|&(d, c)| ((d - 1) as f64, (d * c) as f64 / l_n as f64)),
    )?;
    Ok(SizeBiasedMeasures { nu_star, nu, counts, n, l_n })
}

/// Finite version of a count law: exact when finitely supported, otherwise
/// cut where the tail drops below 1e-16 with the tail mass on the last atom.
pub fn count_measure(law: &Dist) -> Result<DiscreteMeasure> {
    if !law.is_count() {
        return Err(Error::InvalidDistribution("not a count law".into()));
    }
    if let Some(m) = law.as_discrete() {
        return Ok(m);
    }
    let mean = law.mean().ok_or_else(|| Error::MomentUnavailable("E[D]".into()))?;
    let mut atoms = Vec::new();
    let mut k = 0u64;
    loop {
        let here = law.tail_ge(k);
        let after = law.tail_ge(k + 1);
        if after < 1e-16 && k as f64 > mean {
            atoms.push((k as f64, here));
            break;
        }
        if here - after > 0.0 {
            atoms.push((k as f64, here - after));
        }
        k += 1;
    }
    DiscreteMeasure::from_weighted(atoms)
}

/// The limits (nu*, nu) of the size-biased measures for i.i.d. degrees from f.
pub fn size_biased_limits(f: &DiscreteMeasure) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let mean = f.mean();
    if !(mean > 0.0) || !f.is_integer_supported() || f.support()[0] < 0.0 {
        return Err(Error::InvalidDistribution("need a nonnegative integer law with positive mean".into()));
    }
    let nu = DiscreteMeasure::from_weighted(f.atoms().filter(|a| a.0 > 0.0).map(|(k, p)| (k - 1.0, k * p / mean)))?;
    Ok((f.clone(), nu))
}

/// d1 for integer-supported laws: sum over k of |F(k) - G(k)|.
pub fn d1_integer(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if !mu.is_integer_supported() || !nu.is_integer_supported() {
        return Err(Error::InvalidMeasure("integer supports required".into()));
    }
    let lo = mu.support()[0].min(nu.support()[0]) as i64;
    let hi = mu.support()[mu.len() - 1].max(nu.support()[nu.len() - 1]) as i64;
    let (a, b) = (mu.atoms().collect::<Vec<_>>(), nu.atoms().collect::<Vec<_>>());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    for k in lo..hi {
        while i < a.len() && a[i].0 as i64 <= k {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 as i64 <= k {
            fb += b[j].1;
            j += 1;
        }
        total += (fa - fb).abs();
    }
    Ok(total)
}

/// Per-n replications of n^delta_star d1(nu_n*, nu*) and n^delta d1(nu_n, nu).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeBiasRates {
    pub star: Curve,
    pub sized: Curve,
}

pub fn sizebias_rate_experiment(
    f: &Dist,
    eps_moment: f64,
    n_grid: &[u64],
    delta_star: f64,
    delta: f64,
    reps: usize,
    key: StreamKey,
) -> Result<SizeBiasRates> {
    if !(eps_moment > 0.0) || f.abs_moment(2.0 + eps_moment).is_none_or(|m| !m.is_finite()) {
        return Err(Error::MomentUnavailable(format!("E[D^(2+{eps_moment})]")));
    }
    if !(delta_star > 0.0 && delta_star < 0.5) {
        return Err(Error::Domain(format!("delta_star = {delta_star} is not in (0, 1/2)")));
    }
    let cap = 0.5f64.min(eps_moment / (2.0 + eps_moment));
    if !(delta > 0.0 && delta < cap) {
        return Err(Error::Domain(format!("delta = {delta} is not in (0, {cap})")));
    }
    if n_grid.is_empty() || reps == 0 {
        return Err(Error::Empty("grid or replications".into()));
    }
    let (lim_star, lim) = size_biased_limits(&count_measure(f)?)?;
    let cells: Vec<(u64, usize)> = n_grid.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let vals: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(n, r)| {
            let ds = DegreeSequence::sample(f, n as usize, key.child(n).child(r as u64))?;
            let sb = size_biased(&ds)?;
            let nf = n as f64;
            Ok((
                nf.powf(delta_star) * d1_integer(&sb.nu_star, &lim_star)?,
                nf.powf(delta) * d1_integer(&sb.nu, &lim)?,
            ))
        })
        .collect::<Result<_>>()?;
    let curve = |pick: fn(&(f64, f64)) -> f64| Curve {
        points: n_grid
            .iter()
            .zip(vals.chunks(reps))
            .map(|(&n, c)| CurvePoint {
                n,
                level: 0,
                reps: c.iter().map(pick).collect(),
            })
            .collect(),
        baseline: Vec::new(),
    };
    Ok(SizeBiasRates {
        star: curve(|v| v.0),
        sized: curve(|v| v.1),
    })
}

/// Delayed Galton-Watson tree: root offspring from `root`, others from `rest`.
pub fn delayed_gw(root: &DiscreteMeasure, rest: &DiscreteMeasure) -> Result<(BranchingVectorSampler, RootSampler)> {
    let s = BranchingVectorSampler::composed(
        Mode::Wbt,
        Dist::point(1.0),
        Dist::Finite { measure: rest.clone() },
        WeightRule::Iid { dist: Dist::point(1.0) },
    )?;
    let r = RootSampler::Composed {
        q: Dist::point(1.0),
        n: Dist::Finite { measure: root.clone() },
    };
    r.validate()?;
    Ok((s, r))
}

/// Output of [`gw_coupling_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwCouplingReport {
    /// max_{1<=j<=j_n} |Z^(n,j)/(m_n* m_n^(j-1)) - Z^(j)/(m* m^(j-1))|.
    pub normalized: Curve,
    /// max_{1<=j<=j_n} |Z^(n,j) - Z^(j)| / m^(j-1).
    pub unnormalized: Curve,
    /// Per n: mean over replications of (mean |Z^(n,1) - Z^(1)| over the
    /// root draws) - d1(nu_n*, nu*); zero in expectation.
    pub j1_identity: Vec<(u64, MeanSe)>,
}

/// Degree sequences from f drive a delayed GW tree coupled through shared
/// uniforms to the limit tree.
pub fn gw_coupling_experiment(
    f: &Dist,
    n_grid: &[u64],
    schedule: &Schedule,
    reps: usize,
    root_draws: usize,
    node_cap: usize,
    key: StreamKey,
) -> Result<GwCouplingReport> {
    if n_grid.is_empty() || reps == 0 || root_draws == 0 {
        return Err(Error::Empty("grid, replications or root draws".into()));
    }
    let (g, fl) = size_biased_limits(&count_measure(f)?)?;
    let (m_star, m) = (g.mean(), fl.mean());
    let (lim, lim_root) = delayed_gw(&g, &fl)?;
    let opts = GrowOptions { cap: node_cap, retain: false };
    let cells: Vec<(u64, usize)> = n_grid.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let vals: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|&(n, r)| {
            let k = key.child(n).child(r as u64);
            let ds = DegreeSequence::sample(f, n as usize, k.fork(0))?;
            let sb = size_biased(&ds)?;
            let (mn_star, mn) = (sb.nu_star.mean(), sb.nu.mean());
            let (s, root) = delayed_gw(&sb.nu_star, &sb.nu)?;
            let cs = CoupledSampler::new(
                lim.clone(),
                s,
                Sharing::ALL,
                Some(RootCoupling {
                    a: lim_root.clone(),
                    b: root,
                    sharing: Sharing::ALL,
                }),
            )?;
            let j_n = schedule.at(n).max(1);
            let (ta, tb) = grow_coupled(&cs, j_n, opts, k.fork(1))?;
            let mut norm: f64 = 0.0;
            let mut raw: f64 = 0.0;
            for j in 1..=j_n {
                let (z, zn) = (ta.levels[j].nodes as f64, tb.levels[j].nodes as f64);
                let scale = |ms: f64, mm: f64| ms * mm.powi(j as i32 - 1);
                let ratio = |x: f64, s: f64| if x == 0.0 { 0.0 } else { x / s };
                norm = norm.max((ratio(zn, scale(mn_star, mn)) - ratio(z, scale(m_star, m))).abs());
                raw = raw.max((zn - z).abs() / m.powi(j as i32 - 1));
            }
            // root generation only: many coupled draws against the exact d1
            let mut gap = 0.0;
            for t in 0..root_draws {
                let u = k.fork(2).child(t as u64).uniform(0);
                gap += (sb.nu_star.quantile(u) - g.quantile(u)).abs();
            }
            let d1 = d1_integer(&sb.nu_star, &g)?;
            Ok((norm, raw, gap / root_draws as f64 - d1))
        })
        .collect::<Result<_>>()?;
    let curve = |pick: fn(&(f64, f64, f64)) -> f64| Curve {
        points: n_grid
            .iter()
            .zip(vals.chunks(reps))
            .map(|(&n, c)| CurvePoint {
                n,
                level: schedule.at(n).max(1),
                reps: c.iter().map(pick).collect(),
            })
            .collect(),
        baseline: Vec::new(),
    };
    Ok(GwCouplingReport {
        normalized: curve(|v| v.0),
        unnormalized: curve(|v| v.1),
        j1_identity: n_grid
            .iter()
            .zip(vals.chunks(reps))
            .map(|(&n, c)| (n, mean_se(&c.iter().map(|v| v.2).collect::<Vec<_>>())))
            .collect(),
    })
}

/// Ranks of R = q + c sum_{j -> i} R_j / out_j; the mass c R_j of a node
/// without out-edges is spread in proportion to the personalization.
pub fn pagerank(g: &Multigraph, damping: f64, personalization: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !g.directed {
        return Err(Error::Domain("PageRank needs a directed graph".into()));
    }
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::Domain(format!("damping {damping} is not in (0, 1)")));
    }
    if personalization.len() != g.n || personalization.iter().any(|&q| !(q >= 0.0)) {
        return Err(Error::Domain("personalization must be a nonnegative vector per node".into()));
    }
    let q_total: f64 = personalization.iter().sum();
    let mut out = vec![0usize; g.n];
    for &(a, _) in &g.edges {
        out[a] += 1;
    }
    let mut r = personalization.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let dangling: f64 = (0..g.n).filter(|&i| out[i] == 0).map(|i| r[i]).sum();
        let mut next: Vec<f64> = personalization
            .iter()
            .map(|&q| q + if q_total > 0.0 { damping * dangling * q / q_total } else { 0.0 })
            .collect();
        for &(a, b) in &g.edges {
            next[b] += damping * r[a] / out[a] as f64;
        }
        residual = next.iter().zip(&r).map(|(x, y)| (x - y).abs()).sum();
        r = next;
        if residual <= tol {
            return Ok(r);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// PageRank of uniform nodes against R^(n,k) of the tree law the sequence
/// induces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankComparison {
    pub d1: f64,
    /// d1 between two independent tree samples of the same size.
    pub baseline: f64,
    pub rank_mean: MeanSe,
    pub tree_mean: MeanSe,
    pub dangling_nodes: usize,
}

/// Tree law of ranks: a node's children are its in-neighbours, reached
/// through a uniform out-stub, so the generic (Q, N, C) = (1, in, c/out) is
/// drawn with probability proportional to out-degree; the root is a uniform
/// node.
pub fn rank_tree_law(ds: &BiDegreeSequence, damping: f64) -> Result<(BranchingVectorSampler, RootSampler)> {
    let mut joint: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (&i, &o) in ds.ins.iter().zip(&ds.outs) {
        *joint.entry((i, o)).or_default() += 1;
    }
    let l: u64 = ds.outs.iter().sum();
    if l == 0 {
        return Err(Error::InvalidDegrees("no edges".into()));
    }
    let n = ds.len() as f64;
    let rows = joint
        .iter()
        .filter(|(k, _)| k.1 > 0)
        .map(|(&(i, o), &c)| TableRow {
            prob: (c * o) as f64 / l as f64,
            q: 1.0,
            n: i as usize,
            c: vec![damping / o as f64],
        })
        .collect();
    let s = BranchingVectorSampler::table(Mode::Wbt, rows)?;
    let root = RootSampler::Table {
        rows: joint.iter().map(|(&(i, _), &c)| (c as f64 / n, 1.0, i as usize)).collect(),
    };
    root.validate()?;
    Ok((s, root))
}

pub fn rank_vs_wbt(ds: &BiDegreeSequence, damping: f64, k: usize, n_samples: usize, key: StreamKey) -> Result<RankComparison> {
    if n_samples == 0 {
        return Err(Error::Empty("samples".into()));
    }
    let g = directed_config_model(ds, key.fork(1))?;
    let ranks = pagerank(&g, damping, &vec![1.0; g.n], 1e-12, 100_000)?;
    let mut rng = key.fork(2).rng();
    let rank_sample: Vec<f64> = (0..n_samples).map(|_| ranks[rng.random_range(0..g.n)]).collect();
    let (s, root) = rank_tree_law(ds, damping)?;
    let opts = GrowOptions::default();
    let tree = |tag: u64| -> Result<Vec<f64>> {
        (0..n_samples)
            .map(|i| r_process(&grow(&s, Some(&root), k, opts, key.fork(tag).child(i as u64))?, k))
            .collect()
    };
    let (t1, t2) = (tree(3)?, tree(4)?);
    Ok(RankComparison {
        d1: d1_sorted_samples(&rank_sample, &t1)?,
        baseline: d1_sorted_samples(&t1, &t2)?,
        rank_mean: mean_se(&rank_sample),
        tree_mean: mean_se(&t1),
        dangling_nodes: ds.outs.iter().filter(|&&o| o == 0).count(),
    })
}

/// Breadth-first generation sizes of a directed graph along in-edges, the
/// direction ranks flow; used to compare with the rank tree.
pub fn in_exploration(g: &Multigraph, start: usize, max_depth: usize) -> Result<Vec<usize>> {
    if start >= g.n {
        return Err(Error::Domain(format!("start node {start} not in the graph")));
    }
    let mut parents = vec![Vec::new(); g.n];
    for &(a, b) in &g.edges {
        parents[b].push(a);
    }
    let mut depth = vec![usize::MAX; g.n];
    depth[start] = 0;
    let mut sizes = vec![0usize; max_depth + 1];
    sizes[0] = 1;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        if depth[v] == max_depth {
            continue;
        }
        for &u in &parents[v] {
            if depth[u] == usize::MAX {
                depth[u] = depth[v] + 1;
                sizes[depth[u]] += 1;
                queue.push_back(u);
            }
        }
    }
    Ok(sizes)
}
