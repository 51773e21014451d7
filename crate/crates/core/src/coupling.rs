//! Two trees on shared randomness and the expectation bounds relating them.
//!
//! Side A carries the law written without a hat (mu, nu) and side B the
//! hatted one. Node `i` of both trees reads the stream keyed by `i`; side B
//! swaps in an independent stream for the components the coupling does not
//! share, so the joint law of a node's two vectors is exactly the coupling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{
    grow_with, BranchingVectorSampler, GrowOptions, Mode, NodeHead, RootSampler, Sharing,
    TableRow, TreeRealization, VectorLaw, WeightRule,
};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::stats::{Accumulator, MeanSe};
use crate::stream::StreamKey;

/// Coupling of the root pairs (Q_root, N_root) of two delayed trees.
#[derive(Debug, Clone, PartialEq)]
pub struct RootCoupling {
    pub a: RootSampler,
    pub b: RootSampler,
    pub sharing: Sharing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSampler {
    pub a: BranchingVectorSampler,
    pub b: BranchingVectorSampler,
    pub sharing: Sharing,
    /// WBT only; when absent both roots use their generic law under `sharing`.
    pub root: Option<RootCoupling>,
}

/// One atom of an explicit joint law of two vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRow {
    pub prob: f64,
    pub a: (f64, usize, Vec<f64>),
    pub b: (f64, usize, Vec<f64>),
}

impl CoupledSampler {
    pub fn new(
        a: BranchingVectorSampler,
        b: BranchingVectorSampler,
        sharing: Sharing,
        root: Option<RootCoupling>,
    ) -> Result<Self> {
        if a.mode != b.mode {
            return Err(Error::InvalidCoupling("both sides must have the same mode".into()));
        }
        if root.is_some() && a.mode == Mode::Wbp {
            return Err(Error::InvalidCoupling(
                "root couplings are defined for weighted branching trees only".into(),
            ));
        }
        if let Some(r) = &root {
            r.a.validate()?;
            r.b.validate()?;
        }
        a.validate()?;
        b.validate()?;
        Ok(Self { a, b, sharing, root })
    }

    /// The same law on both sides with all randomness shared.
    pub fn identity(s: BranchingVectorSampler, root: Option<RootSampler>) -> Result<Self> {
        let root = root.map(|r| RootCoupling {
            a: r.clone(),
            b: r,
            sharing: Sharing::ALL,
        });
        Self::new(s.clone(), s, Sharing::ALL, root)
    }

    pub fn independent(a: BranchingVectorSampler, b: BranchingVectorSampler) -> Result<Self> {
        Self::new(a, b, Sharing::NONE, None)
    }

    /// Quantile coupling of the listed components (same uniform on both sides).
    pub fn quantile(a: BranchingVectorSampler, b: BranchingVectorSampler, shared: Sharing) -> Result<Self> {
        Self::new(a, b, shared, None)
    }

    /// Explicit finite joint law: both sides become tables drawing their row
    /// from one shared uniform.
    pub fn joint_table(mode: Mode, rows: Vec<JointRow>) -> Result<Self> {
        let side = |pick: fn(&JointRow) -> &(f64, usize, Vec<f64>)| {
            BranchingVectorSampler::table(
                mode,
                rows.iter()
                    .map(|r| {
                        let (q, n, c) = pick(r);
                        TableRow {
                            prob: r.prob,
                            q: *q,
                            n: *n,
                            c: c.clone(),
                        }
                    })
                    .collect(),
            )
        };
        let a = side(|r| &r.a)?;
        let b = side(|r| &r.b)?;
        Self::new(a, b, Sharing::ALL, None)
    }

    pub fn with_root(mut self, root: RootCoupling) -> Result<Self> {
        if self.a.mode == Mode::Wbp {
            return Err(Error::InvalidCoupling(
                "root couplings are defined for weighted branching trees only".into(),
            ));
        }
        root.a.validate()?;
        root.b.validate()?;
        self.root = Some(root);
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.a.mode
    }
}

/// Both trees of one coupled replication.
pub fn grow_coupled(
    cs: &CoupledSampler,
    depth: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<(TreeRealization, TreeRealization)> {
    let (ra, rb, rs) = match &cs.root {
        Some(r) => (Some(&r.a), Some(&r.b), r.sharing),
        None => (None, None, cs.sharing),
    };
    let ta = grow_with(&cs.a, &Sharing::ALL, ra, &Sharing::ALL, depth, opts, key)?;
    let tb = grow_with(&cs.b, &cs.sharing, rb, &rs, depth, opts, key)?;
    Ok((ta, tb))
}

/// Mean and SE of |W_B^(j) - W_A^(j)| for j = 0..=max_j from the same
/// `n_reps` coupled replications.
pub fn gap_curve(
    cs: &CoupledSampler,
    max_j: usize,
    n_reps: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<Vec<MeanSe>> {
    if n_reps < 2 {
        return Err(Error::Domain("at least two replications are needed for an SE".into()));
    }
    let per_rep: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let (ta, tb) = grow_coupled(cs, max_j, opts, key.fork(r as u64))?;
            Ok(ta
                .levels
                .iter()
                .zip(&tb.levels)
                .map(|(a, b)| (b.w - a.w).abs())
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![Accumulator::new(); max_j + 1];
    for row in &per_rep {
        for (a, x) in acc.iter_mut().zip(row) {
            a.push(*x);
        }
    }
    Ok(acc.iter().map(Accumulator::finish).collect())
}

pub fn mean_abs_gap(
    cs: &CoupledSampler,
    j: usize,
    n_reps: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<MeanSe> {
    Ok(gap_curve(cs, j, n_reps, opts, key)?[j])
}

/// Constants entering the two bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConstants {
    pub mode: Mode,
    pub rho: f64,
    pub rho_hat: f64,
    /// E|Q| of side A's generic vector.
    pub mean_abs_q: f64,
    /// WBP: E_pi[|Q_B - Q_A| + sum_i |B_B,i - B_A,i|]; WBT: the analogue with
    /// C Q in place of Q and B_i = C 1(N >= i).
    pub e: MeanSe,
    /// WBT: E_pi*[|Q_B - Q_A| + |N_B - N_A|] at the root.
    pub e_star: MeanSe,
    /// WBT: root offspring means E[N_A,root] and E[N_B,root].
    pub mean_n: f64,
    pub mean_n_hat: f64,
    /// WBT: E|C_A Q_A|.
    pub mean_abs_cq: f64,
    /// All of e and e_star computed by exhaustive summation.
    pub exact: bool,
}

/// Joint atoms of two discrete laws driven by one uniform (comonotone) or
/// by independent uniforms.
fn pair_atoms(a: &DiscreteMeasure, b: &DiscreteMeasure, shared: bool) -> Vec<(f64, f64, f64)> {
    if !shared {
        let mut out = Vec::with_capacity(a.len() * b.len());
        for (x, p) in a.atoms() {
            for (y, q) in b.atoms() {
                out.push((x, y, p * q));
            }
        }
        return out;
    }
    let (sa, ma) = (a.support(), a.mass());
    let (sb, mb) = (b.support(), b.mass());
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (ma[0], mb[0]);
    let mut out = Vec::new();
    loop {
        let step = ra.min(rb);
        if step > 0.0 {
            out.push((sa[i], sb[j], step));
        }
        ra -= step;
        rb -= step;
        let (last_a, last_b) = (i + 1 == sa.len(), j + 1 == sb.len());
        if last_a && last_b {
            break;
        }
        // advance whichever side ran out; a final atom absorbs rounding crumbs
        if (ra <= rb && !last_a) || last_b {
            i += 1;
            ra = ma[i];
        } else {
            j += 1;
            rb = mb[j];
        }
    }
    out
}

fn pair_abs_diff(a: &DiscreteMeasure, b: &DiscreteMeasure, shared: bool) -> f64 {
    pair_atoms(a, b, shared)
        .into_iter()
        .map(|(x, y, p)| p * (y - x).abs())
        .sum()
}

fn discrete(d: &Dist) -> DiscreteMeasure {
    d.as_discrete().expect("finite-support law")
}

/// Law of child i's weight given N = n, with 0 when i > n.
fn weight_law(rule: &WeightRule, n: usize, i: usize) -> DiscreteMeasure {
    if i > n {
        return DiscreteMeasure::dirac(0.0);
    }
    match rule {
        WeightRule::Fixed { values } => DiscreteMeasure::dirac(values.get(i - 1).copied().unwrap_or(0.0)),
        WeightRule::Iid { dist } => discrete(dist),
        WeightRule::ByN { table, default } => discrete(
            table
                .iter()
                .find(|(k, _)| *k as usize == n)
                .map_or(default, |(_, d)| d),
        ),
    }
}

/// Law of a WBT node's own weight given N = n.
fn node_weight_law(rule: &WeightRule, n: usize) -> DiscreteMeasure {
    match rule {
        WeightRule::Fixed { values } => DiscreteMeasure::dirac(values.first().copied().unwrap_or(0.0)),
        _ => weight_law(rule, n.max(1), 1),
    }
}

/// Integrand of E for one realized pair of vectors.
fn e_integrand(mode: Mode, a: &(f64, usize, Vec<f64>), b: &(f64, usize, Vec<f64>)) -> f64 {
    match mode {
        Mode::Wbp => {
            let m = a.2.len().max(b.2.len());
            (b.0 - a.0).abs()
                + (0..m)
                    .map(|i| (b.2.get(i).copied().unwrap_or(0.0) - a.2.get(i).copied().unwrap_or(0.0)).abs())
                    .sum::<f64>()
        }
        Mode::Wbt => {
            let (ca, cb) = (a.2[0], b.2[0]);
            let (na, nb) = (a.1 as f64, b.1 as f64);
            (cb * b.0 - ca * a.0).abs()
                + (cb - ca).abs() * na.min(nb)
                + cb.abs() * (nb - na).max(0.0)
                + ca.abs() * (na - nb).max(0.0)
        }
    }
}

fn exact_e(cs: &CoupledSampler) -> Option<f64> {
    let mode = cs.mode();
    let sh = cs.sharing;
    match (&cs.a.law, &cs.b.law) {
        (VectorLaw::Table { rows: ra }, VectorLaw::Table { rows: rb }) => {
            let ia = DiscreteMeasure::from_weighted(ra.iter().enumerate().map(|(i, r)| (i as f64, r.prob))).ok()?;
            let ib = DiscreteMeasure::from_weighted(rb.iter().enumerate().map(|(i, r)| (i as f64, r.prob))).ok()?;
            // rows with zero probability vanish from the index measures
            Some(
                pair_atoms(&ia, &ib, sh.q)
                    .into_iter()
                    .map(|(x, y, p)| {
                        let (x, y) = (&ra[x as usize], &rb[y as usize]);
                        p * e_integrand(mode, &(x.q, x.n, x.c.clone()), &(y.q, y.n, y.c.clone()))
                    })
                    .sum(),
            )
        }
        (
            VectorLaw::Composed { q: qa, n: na, c: ca },
            VectorLaw::Composed { q: qb, n: nb, c: cb },
        ) => {
            if !cs.a.is_finite() || !cs.b.is_finite() {
                return None;
            }
            let q_pairs = pair_atoms(&discrete(qa), &discrete(qb), sh.q);
            let n_pairs = pair_atoms(&discrete(na), &discrete(nb), sh.n);
            let mut total = 0.0;
            match mode {
                Mode::Wbp => {
                    total += q_pairs.iter().map(|(x, y, p)| p * (y - x).abs()).sum::<f64>();
                    for &(x, y, p) in &n_pairs {
                        let (x, y) = (x as usize, y as usize);
                        for i in 1..=x.max(y) {
                            total += p * pair_abs_diff(&weight_law(ca, x, i), &weight_law(cb, y, i), sh.c);
                        }
                    }
                }
                Mode::Wbt => {
                    for &(x, y, p) in &n_pairs {
                        let (nx, ny) = (x as usize, y as usize);
                        // the node's own weight is drawn even when N = 0
                        let c_pairs = pair_atoms(&node_weight_law(ca, nx), &node_weight_law(cb, ny), sh.c);
                        for &(c1, c2, pc) in &c_pairs {
                            for &(q1, q2, pq) in &q_pairs {
                                total += p * pc * pq * e_integrand(mode, &(q1, nx, vec![c1]), &(q2, ny, vec![c2]));
                            }
                        }
                    }
                }
            }
            Some(total)
        }
        _ => None,
    }
}

fn generic_root(s: &BranchingVectorSampler) -> RootSampler {
    match &s.law {
        VectorLaw::Composed { q, n, .. } => RootSampler::Composed {
            q: q.clone(),
            n: n.clone(),
        },
        VectorLaw::Table { rows } => RootSampler::Table {
            rows: rows.iter().map(|r| (r.prob, r.q, r.n)).collect(),
        },
    }
}

fn root_coupling(cs: &CoupledSampler) -> RootCoupling {
    cs.root.clone().unwrap_or_else(|| RootCoupling {
        a: generic_root(&cs.a),
        b: generic_root(&cs.b),
        sharing: cs.sharing,
    })
}

fn exact_e_star(rc: &RootCoupling) -> Option<f64> {
    match (&rc.a, &rc.b) {
        (RootSampler::Composed { q: qa, n: na }, RootSampler::Composed { q: qb, n: nb }) => {
            if !rc.a.is_finite() || !rc.b.is_finite() {
                return None;
            }
            Some(
                pair_abs_diff(&discrete(qa), &discrete(qb), rc.sharing.q)
                    + pair_abs_diff(&discrete(na), &discrete(nb), rc.sharing.n),
            )
        }
        (RootSampler::Table { rows: ra }, RootSampler::Table { rows: rb }) => {
            let ia = DiscreteMeasure::from_weighted(ra.iter().enumerate().map(|(i, r)| (i as f64, r.0))).ok()?;
            let ib = DiscreteMeasure::from_weighted(rb.iter().enumerate().map(|(i, r)| (i as f64, r.0))).ok()?;
            Some(
                pair_atoms(&ia, &ib, rc.sharing.q)
                    .into_iter()
                    .map(|(x, y, p)| {
                        let (x, y) = (ra[x as usize], rb[y as usize]);
                        p * ((y.1 - x.1).abs() + (y.2 as f64 - x.2 as f64).abs())
                    })
                    .sum(),
            )
        }
        _ => None,
    }
}

/// Coupling constants, exact when both sides are finite and of the same form,
/// otherwise estimated from `mc_reps` coupled vector draws.
pub fn coupling_constants(cs: &CoupledSampler, mc_reps: usize, key: StreamKey) -> Result<CouplingConstants> {
    let ma = cs.a.moments()?;
    let mb = cs.b.moments()?;
    let mode = cs.mode();
    let e_exact = exact_e(cs);
    let mc_e = || -> MeanSe {
        let mut acc = Accumulator::new();
        for r in 0..mc_reps {
            let k = key.fork(r as u64);
            let a = cs.a.draw_with(&Sharing::ALL, k);
            let b = cs.b.draw_with(&cs.sharing, k);
            acc.push(e_integrand(mode, &a, &b));
        }
        acc.finish()
    };
    let e = e_exact.map_or_else(mc_e, MeanSe::exact);
    let mut exact = e_exact.is_some();

    let (e_star, mean_n, mean_n_hat, mean_abs_cq) = match mode {
        Mode::Wbp => (MeanSe::exact(0.0), ma.mean_n, mb.mean_n, 0.0),
        Mode::Wbt => {
            let rc = root_coupling(cs);
            let es = match exact_e_star(&rc) {
                Some(v) => MeanSe::exact(v),
                None => {
                    exact = false;
                    let mut acc = Accumulator::new();
                    for r in 0..mc_reps {
                        let k = key.fork(r as u64).fork(1);
                        let a: NodeHead = rc.a.head(&Sharing::ALL, k);
                        let b: NodeHead = rc.b.head(&rc.sharing, k);
                        acc.push((b.q - a.q).abs() + (b.n as f64 - a.n as f64).abs());
                    }
                    acc.finish()
                }
            };
            (
                es,
                rc.a.moments()?.1,
                rc.b.moments()?.1,
                ma.mean_abs_cq.expect("WBT moments carry E|CQ|"),
            )
        }
    };
    Ok(CouplingConstants {
        mode,
        rho: ma.rho,
        rho_hat: mb.rho,
        mean_abs_q: ma.mean_abs_q,
        e,
        e_star,
        mean_n,
        mean_n_hat,
        mean_abs_cq,
        exact,
    })
}

fn mixed_sum(first: f64, second: f64, j: usize) -> f64 {
    // sum_{t=0}^{j-1} first^t second^{j-1-t}
    (0..j).map(|t| first.powi(t as i32) * second.powi((j - 1 - t) as i32)).sum()
}

/// WBP bound: (rho_hat^j + E|Q| sum_{t<j} rho^t rho_hat^{j-1-t}) E.
pub fn wbp_bound(cc: &CouplingConstants, j: usize) -> f64 {
    (cc.rho_hat.powi(j as i32) + cc.mean_abs_q * mixed_sum(cc.rho, cc.rho_hat, j)) * cc.e.mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// Root-discrepancy term multiplied by E|Q|.
    Statement,
    /// Root-discrepancy term multiplied by E|CQ|, as the derivation yields.
    Proof,
}

/// WBT bound; j = 0 gives E*.
pub fn wbt_bound(cc: &CouplingConstants, j: usize, variant: BoundVariant) -> Result<f64> {
    if j == 0 {
        return Ok(cc.e_star.mean);
    }
    let ratio = if cc.rho > 0.0 {
        cc.mean_n * cc.mean_abs_cq / cc.rho
    } else if cc.mean_abs_cq == 0.0 || j == 1 {
        // the ratio term multiplies rho^(j-1), which vanishes unless j = 1
        0.0
    } else {
        return Err(Error::Domain("rho = 0 with nonzero E|CQ|".into()));
    };
    let lead = cc.mean_n_hat.max(ratio);
    let tail = match variant {
        BoundVariant::Statement => cc.mean_abs_q,
        BoundVariant::Proof => cc.mean_abs_cq,
    };
    Ok(lead * mixed_sum(cc.rho_hat, cc.rho, j) * cc.e.mean
        + tail * cc.rho_hat.powi(j as i32 - 1) * cc.e_star.mean)
}

/// The two bounds at one level with the SE they inherit from E and E*.
fn bounds_with_se(cc: &CouplingConstants, j: usize) -> Result<(f64, f64, f64)> {
    let with = |e: f64, es: f64, f: &dyn Fn(&CouplingConstants) -> Result<f64>| -> Result<f64> {
        let mut c = *cc;
        c.e.mean = e;
        c.e_star.mean = es;
        f(&c)
    };
    match cc.mode {
        Mode::Wbp => {
            let b = wbp_bound(cc, j);
            let slope = with(1.0, 0.0, &|c| Ok(wbp_bound(c, j)))?;
            Ok((b, b, slope * cc.e.se))
        }
        Mode::Wbt => {
            let s = wbt_bound(cc, j, BoundVariant::Statement)?;
            let p = wbt_bound(cc, j, BoundVariant::Proof)?;
            let variant = if s >= p { BoundVariant::Statement } else { BoundVariant::Proof };
            let de = with(1.0, 0.0, &|c| wbt_bound(c, j, variant))?;
            let des = with(0.0, 1.0, &|c| wbt_bound(c, j, variant))?;
            Ok((s, p, ((de * cc.e.se).powi(2) + (des * cc.e_star.se).powi(2)).sqrt()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertRow {
    pub j: usize,
    pub gap: f64,
    pub gap_se: f64,
    pub bound_statement: f64,
    pub bound_proof: f64,
    pub bound_se: f64,
    /// Slack added to the larger bound: 3 sqrt(gap_se^2 + bound_se^2).
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub constants: CouplingConstants,
    pub rows: Vec<CertRow>,
}

impl CertReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Compares the Monte Carlo gap with the bound at each level of `js`.
pub fn certify(
    cs: &CoupledSampler,
    js: &[usize],
    n_reps: usize,
    mc_reps: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<CertReport> {
    let constants = coupling_constants(cs, mc_reps, key.fork(0xC0))?;
    let max_j = js.iter().copied().max().unwrap_or(0);
    let gaps = gap_curve(cs, max_j, n_reps, opts, key.fork(0x6A))?;
    let rows = js
        .iter()
        .map(|&j| {
            let (s, p, bse) = bounds_with_se(&constants, j)?;
            let g = gaps[j];
            let slack = 3.0 * (g.se * g.se + bse * bse).sqrt();
            Ok(CertRow {
                j,
                gap: g.mean,
                gap_se: g.se,
                bound_statement: s,
                bound_proof: p,
                bound_se: bse,
                slack,
                pass: g.mean <= s.max(p) + slack,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CertReport { constants, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::d1_discrete;

    fn det(q: f64, n: usize, c: f64) -> BranchingVectorSampler {
        BranchingVectorSampler::deterministic(q, n, c)
    }

    #[test]
    fn identity_coupling_has_zero_gap() {
        let s = BranchingVectorSampler::composed(
            Mode::Wbp,
            Dist::uniform(0.0, 1.0).unwrap(),
            Dist::poisson(1.4).unwrap(),
            WeightRule::Iid { dist: Dist::uniform(0.0, 1.0).unwrap() },
        )
        .unwrap();
        let cs = CoupledSampler::identity(s, None).unwrap();
        let (a, b) = grow_coupled(&cs, 5, GrowOptions::default(), StreamKey::new(3)).unwrap();
        assert_eq!(a, b);
        let g = gap_curve(&cs, 5, 50, GrowOptions::default(), StreamKey::new(3)).unwrap();
        assert!(g.iter().all(|m| m.mean == 0.0 && m.se == 0.0));
    }

    #[test]
    fn deterministic_pair_gaps() {
        let cs = CoupledSampler::independent(det(1.0, 2, 0.3), det(1.0, 2, 0.4)).unwrap();
        let g = gap_curve(&cs, 2, 4, GrowOptions::default(), StreamKey::new(1)).unwrap();
        assert!((g[1].mean - 0.2).abs() < 1e-15 && g[1].se == 0.0);
        assert!((g[2].mean - 0.28).abs() < 1e-15);
        let cc = coupling_constants(&cs, 10, StreamKey::new(1)).unwrap();
        assert!(cc.exact);
        assert!((cc.e.mean - 0.2).abs() < 1e-15);
        assert!((cc.rho - 0.6).abs() < 1e-15 && (cc.rho_hat - 0.8).abs() < 1e-15);
    }

    #[test]
    fn wbp_bound_plug_in_values() {
        let cc = CouplingConstants {
            mode: Mode::Wbp,
            rho: 0.6,
            rho_hat: 0.8,
            mean_abs_q: 1.0,
            e: MeanSe::exact(0.2),
            e_star: MeanSe::exact(0.0),
            mean_n: 2.0,
            mean_n_hat: 2.0,
            mean_abs_cq: 0.0,
            exact: true,
        };
        assert!((wbp_bound(&cc, 1) - 0.36).abs() < 1e-15);
        assert!((wbp_bound(&cc, 2) - 0.408).abs() < 1e-15);
        let zero = CouplingConstants { e: MeanSe::exact(0.0), ..cc };
        assert_eq!(wbp_bound(&zero, 7), 0.0);
    }

    #[test]
    fn wbt_bound_plug_in_values() {
        let cc = CouplingConstants {
            mode: Mode::Wbt,
            rho: 0.5,
            rho_hat: 0.6,
            mean_abs_q: 1.0,
            e: MeanSe::exact(0.1),
            e_star: MeanSe::exact(0.2),
            mean_n: 2.0,
            mean_n_hat: 2.0,
            mean_abs_cq: 0.5,
            exact: true,
        };
        assert!((wbt_bound(&cc, 1, BoundVariant::Statement).unwrap() - 0.4).abs() < 1e-15);
        assert!((wbt_bound(&cc, 1, BoundVariant::Proof).unwrap() - 0.3).abs() < 1e-15);
        let root_only = CouplingConstants { e_star: MeanSe::exact(0.3), ..cc };
        assert_eq!(wbt_bound(&root_only, 0, BoundVariant::Statement).unwrap(), 0.3);
        let zero = CouplingConstants { e: MeanSe::exact(0.0), e_star: MeanSe::exact(0.0), ..cc };
        assert_eq!(wbt_bound(&zero, 4, BoundVariant::Proof).unwrap(), 0.0);
        let degenerate = CouplingConstants { rho: 0.0, ..cc };
        assert!(wbt_bound(&degenerate, 3, BoundVariant::Proof).is_err());
    }

    #[test]
    fn certify_deterministic_pair_exactly() {
        let cs = CoupledSampler::independent(det(1.0, 2, 0.3), det(1.0, 2, 0.4)).unwrap();
        let js: Vec<usize> = (1..=10).collect();
        let rep = certify(&cs, &js, 2, 10, GrowOptions::default(), StreamKey::new(9)).unwrap();
        assert!(rep.all_pass());
        for r in &rep.rows {
            let j = r.j as i32;
            assert!((r.gap - (0.8f64.powi(j) - 0.6f64.powi(j))).abs() < 1e-12);
            assert_eq!(r.slack, 0.0);
        }
    }

    #[test]
    fn quantile_coupling_constant_is_d1_of_marginals() {
        // N = 0, so E reduces to E|Q_B - Q_A| under the comonotone coupling
        let qa = DiscreteMeasure::new(vec![0.0, 1.0, 4.0], vec![0.2, 0.5, 0.3]).unwrap();
        let qb = DiscreteMeasure::new(vec![0.5, 2.0], vec![0.6, 0.4]).unwrap();
        let side = |m: &DiscreteMeasure| {
            BranchingVectorSampler::composed(
                Mode::Wbp,
                Dist::Finite { measure: m.clone() },
                Dist::point(0.0),
                WeightRule::Iid { dist: Dist::point(0.5) },
            )
            .unwrap()
        };
        let cs = CoupledSampler::quantile(side(&qa), side(&qb), Sharing::ALL).unwrap();
        let cc = coupling_constants(&cs, 10, StreamKey::new(1)).unwrap();
        assert!((cc.e.mean - d1_discrete(&qa, &qb)).abs() < 1e-12);
        let ind = CoupledSampler::independent(side(&qa), side(&qb)).unwrap();
        assert!(coupling_constants(&ind, 10, StreamKey::new(1)).unwrap().e.mean > cc.e.mean);
    }

    #[test]
    fn exact_constants_match_monte_carlo() {
        let a = BranchingVectorSampler::composed(
            Mode::Wbt,
            Dist::finite(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap(),
            Dist::finite(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap(),
            WeightRule::ByN {
                table: vec![(3, Dist::point(0.1))],
                default: Dist::finite(vec![0.2, 0.6], vec![0.5, 0.5]).unwrap(),
            },
        )
        .unwrap();
        let b = BranchingVectorSampler::composed(
            Mode::Wbt,
            Dist::finite(vec![1.0, 3.0], vec![0.7, 0.3]).unwrap(),
            Dist::finite(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap(),
            WeightRule::Iid { dist: Dist::finite(vec![0.3, 0.5], vec![0.4, 0.6]).unwrap() },
        )
        .unwrap();
        for sharing in [Sharing::ALL, Sharing::NONE, Sharing { q: true, n: false, c: true }] {
            let cs = CoupledSampler::quantile(a.clone(), b.clone(), sharing).unwrap();
            let exact = coupling_constants(&cs, 0, StreamKey::new(1)).unwrap();
            assert!(exact.exact);
            // force the Monte Carlo route by comparing against the integrand average
            let mut acc = Accumulator::new();
            for r in 0..60_000u64 {
                let k = StreamKey::new(5).fork(r);
                acc.push(e_integrand(Mode::Wbt, &a.draw_with(&Sharing::ALL, k), &b.draw_with(&sharing, k)));
            }
            let mc = acc.finish();
            assert!((mc.mean - exact.e.mean).abs() < 4.0 * mc.se, "{sharing:?}: {mc:?} vs {}", exact.e.mean);
        }
    }

    #[test]
    fn joint_table_coupling() {
        let rows = vec![
            JointRow { prob: 0.5, a: (1.0, 1, vec![0.5]), b: (1.0, 2, vec![0.5]) },
            JointRow { prob: 0.5, a: (2.0, 0, vec![0.0]), b: (2.0, 0, vec![0.1]) },
        ];
        let cs = CoupledSampler::joint_table(Mode::Wbt, rows).unwrap();
        let cc = coupling_constants(&cs, 0, StreamKey::new(1)).unwrap();
        // row 1: |0.5 - 0.5| + 0 + 0.5 * 1 = 0.5; row 2: |0.2 - 0| = 0.2
        assert!((cc.e.mean - 0.35).abs() < 1e-15);
        // generic roots under the shared row: E* = 0.5 * |2 - 1|
        assert!((cc.e_star.mean - 0.5).abs() < 1e-15);
    }

    #[test]
    fn comonotone_atoms_preserve_marginals() {
        let a = DiscreteMeasure::new(vec![0.0, 1.0, 2.0], vec![0.1, 0.6, 0.3]).unwrap();
        let b = DiscreteMeasure::new(vec![5.0, 6.0], vec![0.35, 0.65]).unwrap();
        let atoms = pair_atoms(&a, &b, true);
        let total: f64 = atoms.iter().map(|t| t.2).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let b5: f64 = atoms.iter().filter(|t| t.1 == 5.0).map(|t| t.2).sum();
        assert!((b5 - 0.35).abs() < 1e-15);
        // comonotone: pairs are ordered in both coordinates
        assert!(atoms.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}
