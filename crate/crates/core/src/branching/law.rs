//! Laws of the generic branching vector and of the root vector.

use serde::{Deserialize, Serialize};

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::stats::{Accumulator, MeanSe};
use crate::stream::StreamKey;

/// Stream tag separating the second side of a coupling from the first.
const SIDE_B: u64 = 0x5EED_B;

/// Uniform positions inside a node stream.
pub(crate) const POS_Q: usize = 0;
pub(crate) const POS_N: usize = 1;
/// Weight of child k (WBP) sits at `POS_N + k`; the node's own weight (WBT) at `POS_N + 1`.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Children's weights come from the parent's vector.
    Wbp,
    /// Every node carries its own (Q, N, C); C multiplies into the node's path weight.
    Wbt,
}

/// Which components of a node's vector read the shared uniforms.
///
/// The first side of a coupling always reads its node stream. The second
/// side reads the same uniform for a shared component and an independent one
/// otherwise. Table laws draw their row with the Q uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sharing {
    pub q: bool,
    pub n: bool,
    pub c: bool,
}

impl Sharing {
    pub const ALL: Sharing = Sharing {
        q: true,
        n: true,
        c: true,
    };
    pub const NONE: Sharing = Sharing {
        q: false,
        n: false,
        c: false,
    };

    #[inline]
    pub(crate) fn uniform(&self, key: StreamKey, pos: usize) -> f64 {
        let shared = match pos {
            POS_Q => self.q,
            POS_N => self.n,
            _ => self.c,
        };
        if shared {
            key.uniform(pos)
        } else {
            key.fork(SIDE_B).uniform(pos)
        }
    }
}

/// How the weights C are drawn in a composed law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    /// i.i.d. draws, independent of (Q, N).
    Iid { dist: Dist },
    /// WBP only: C_i = values[i - 1], and 0 past the end of the list.
    Fixed { values: Vec<f64> },
    /// The law of C depends on the realized N through a lookup table.
    ByN {
        table: Vec<(u64, Dist)>,
        default: Dist,
    },
}

impl WeightRule {
    fn for_n(&self, n: usize) -> Option<&Dist> {
        match self {
            Self::Iid { dist } => Some(dist),
            Self::Fixed { .. } => None,
            Self::ByN { table, default } => Some(
                table
                    .iter()
                    .find(|(k, _)| *k as usize == n)
                    .map_or(default, |(_, d)| d),
            ),
        }
    }

    fn dists(&self) -> Vec<&Dist> {
        match self {
            Self::Iid { dist } => vec![dist],
            Self::Fixed { .. } => Vec::new(),
            Self::ByN { table, default } => {
                table.iter().map(|(_, d)| d).chain(std::iter::once(default)).collect()
            }
        }
    }
}

/// One atom of a tabulated joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub prob: f64,
    pub q: f64,
    pub n: usize,
    /// WBP: the n child weights; WBT: the single weight of the node.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum VectorLaw {
    /// Q, N and the weights drawn from separate uniforms; Q is independent of
    /// (N, C) and C may depend on N.
    Composed { q: Dist, n: Dist, c: WeightRule },
    /// Explicit finite joint law; allows any dependence between components.
    Table { rows: Vec<TableRow> },
}

/// Analytic moments of a branching vector law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// E[sum_{i<=N} |C_i|] (WBP) or E[N |C|] (WBT).
    pub rho: f64,
    pub mean_abs_q: f64,
    pub mean_n: f64,
    /// E|CQ|, WBT only.
    pub mean_abs_cq: Option<f64>,
}

/// The law of the generic branching vector together with its mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingVectorSampler {
    pub mode: Mode,
    pub law: VectorLaw,
}

/// Q, N and (for tables) the selected row of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NodeHead {
    pub q: f64,
    pub n: usize,
    pub row: usize,
}

fn row_index(rows_cum: impl Iterator<Item = f64>, u: f64, len: usize) -> usize {
    let mut acc = 0.0;
    for (i, p) in rows_cum.enumerate() {
        acc += p;
        if acc >= u {
            return i;
        }
    }
    len - 1
}

fn count_from(x: f64) -> usize {
    x as usize
}

impl BranchingVectorSampler {
    pub fn new(mode: Mode, law: VectorLaw) -> Result<Self> {
        let s = Self { mode, law };
        s.validate()?;
        Ok(s)
    }

    pub fn composed(mode: Mode, q: Dist, n: Dist, c: WeightRule) -> Result<Self> {
        Self::new(mode, VectorLaw::Composed { q, n, c })
    }

    pub fn table(mode: Mode, rows: Vec<TableRow>) -> Result<Self> {
        Self::new(mode, VectorLaw::Table { rows })
    }

    /// Deterministic WBP vector (q, n, c, c, ..., c).
    pub fn deterministic(q: f64, n: usize, c: f64) -> Self {
        Self {
            mode: Mode::Wbp,
            law: VectorLaw::Composed {
                q: Dist::point(q),
                n: Dist::point(n as f64),
                c: WeightRule::Iid { dist: Dist::point(c) },
            },
        }
    }

    /// Galton-Watson tree: Q = 1, C = 1, offspring law `n`.
    pub fn galton_watson(n: Dist) -> Result<Self> {
        Self::composed(
            Mode::Wbp,
            Dist::point(1.0),
            n,
            WeightRule::Iid { dist: Dist::point(1.0) },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSampler(m));
        match &self.law {
            VectorLaw::Composed { q, n, c } => {
                q.validate()?;
                n.validate()?;
                if !n.is_count() {
                    return bad("N must be a nonnegative integer law".into());
                }
                for d in c.dists() {
                    d.validate()?;
                }
                match c {
                    WeightRule::Fixed { values } => {
                        if self.mode == Mode::Wbt {
                            return bad("fixed weight lists are a WBP rule".into());
                        }
                        if values.iter().any(|v| !v.is_finite()) {
                            return bad("non-finite fixed weight".into());
                        }
                    }
                    WeightRule::ByN { table, .. } => {
                        let mut ks: Vec<u64> = table.iter().map(|(k, _)| *k).collect();
                        ks.sort_unstable();
                        if ks.windows(2).any(|w| w[0] == w[1]) {
                            return bad("repeated N in weight table".into());
                        }
                    }
                    WeightRule::Iid { .. } => {}
                }
                Ok(())
            }
            VectorLaw::Table { rows } => {
                if rows.is_empty() {
                    return bad("empty table".into());
                }
                let total: f64 = rows.iter().map(|r| r.prob).sum();
                if rows.iter().any(|r| !(r.prob >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return bad(format!("row probabilities must be nonnegative and sum to 1 (sum {total})"));
                }
                for r in rows {
                    let want = match self.mode {
                        Mode::Wbp => r.n,
                        Mode::Wbt => 1,
                    };
                    if r.c.len() != want {
                        return bad(format!(
                            "row with N = {} carries {} weights, expected {want}",
                            r.n,
                            r.c.len()
                        ));
                    }
                    if !r.q.is_finite() || r.c.iter().any(|c| !c.is_finite()) {
                        return bad("non-finite table entry".into());
                    }
                }
                Ok(())
            }
        }
    }

    pub(crate) fn head(&self, sharing: &Sharing, key: StreamKey) -> NodeHead {
        match &self.law {
            VectorLaw::Composed { q, n, .. } => NodeHead {
                q: q.quantile(sharing.uniform(key, POS_Q)),
                n: count_from(n.quantile(sharing.uniform(key, POS_N))),
                row: 0,
            },
            VectorLaw::Table { rows } => {
                let row = row_index(rows.iter().map(|r| r.prob), sharing.uniform(key, POS_Q), rows.len());
                NodeHead {
                    q: rows[row].q,
                    n: rows[row].n,
                    row,
                }
            }
        }
    }

    /// Weight of child `k` (WBP, 1-based) or the node's own weight (WBT, k = 1).
    pub(crate) fn weight(&self, sharing: &Sharing, key: StreamKey, head: &NodeHead, k: usize) -> f64 {
        match &self.law {
            VectorLaw::Composed { c, .. } => match c {
                WeightRule::Fixed { values } => values.get(k - 1).copied().unwrap_or(0.0),
                rule => rule
                    .for_n(head.n)
                    .expect("non-fixed rule")
                    .quantile(sharing.uniform(key, POS_N + k)),
            },
            VectorLaw::Table { rows } => rows[head.row].c[k - 1],
        }
    }

    /// One realized vector: (Q, N, weights). WBP returns N weights, WBT one.
    pub fn draw(&self, key: StreamKey) -> (f64, usize, Vec<f64>) {
        self.draw_with(&Sharing::ALL, key)
    }

    pub(crate) fn draw_with(&self, sharing: &Sharing, key: StreamKey) -> (f64, usize, Vec<f64>) {
        let head = self.head(sharing, key);
        let m = match self.mode {
            Mode::Wbp => head.n,
            Mode::Wbt => 1,
        };
        let c = (1..=m).map(|k| self.weight(sharing, key, &head, k)).collect();
        (head.q, head.n, c)
    }

    pub fn weights_nonnegative(&self) -> bool {
        match &self.law {
            VectorLaw::Composed { c, .. } => match c {
                WeightRule::Fixed { values } => values.iter().all(|v| *v >= 0.0),
                rule => rule.dists().iter().all(|d| d.is_nonnegative()),
            },
            VectorLaw::Table { rows } => rows.iter().all(|r| r.c.iter().all(|c| *c >= 0.0)),
        }
    }

    /// True when every component has finite support, so joint laws can be
    /// enumerated exactly.
    pub fn is_finite(&self) -> bool {
        match &self.law {
            VectorLaw::Composed { q, n, c } => {
                q.is_finite_support()
                    && n.is_finite_support()
                    && c.dists().iter().all(|d| d.is_finite_support())
            }
            VectorLaw::Table { .. } => true,
        }
    }

    /// Q is the constant 1.
    pub fn has_unit_marks(&self) -> bool {
        match &self.law {
            VectorLaw::Composed { q, .. } => *q == Dist::point(1.0),
            VectorLaw::Table { rows } => rows.iter().all(|r| r.q == 1.0),
        }
    }

    /// Analytic moments; fails when one of them is infinite.
    pub fn moments(&self) -> Result<Moments> {
        let missing = |what: &str| Error::MomentUnavailable(format!("{what} is not finite"));
        match &self.law {
            VectorLaw::Table { rows } => {
                let mut m = Moments {
                    rho: 0.0,
                    mean_abs_q: 0.0,
                    mean_n: 0.0,
                    mean_abs_cq: None,
                };
                let mut cq = 0.0;
                for r in rows {
                    m.mean_abs_q += r.prob * r.q.abs();
                    m.mean_n += r.prob * r.n as f64;
                    match self.mode {
                        Mode::Wbp => m.rho += r.prob * r.c.iter().map(|c| c.abs()).sum::<f64>(),
                        Mode::Wbt => {
                            m.rho += r.prob * r.n as f64 * r.c[0].abs();
                            cq += r.prob * (r.c[0] * r.q).abs();
                        }
                    }
                }
                if self.mode == Mode::Wbt {
                    m.mean_abs_cq = Some(cq);
                }
                Ok(m)
            }
            VectorLaw::Composed { q, n, c } => {
                let mean_abs_q = q.mean_abs().ok_or_else(|| missing("E|Q|"))?;
                let mean_n = n.mean().ok_or_else(|| missing("E[N]"))?;
                let abs_c = |d: &Dist| d.mean_abs().ok_or_else(|| missing("E|C|"));
                let pmf = |k: u64| n.tail_ge(k) - n.tail_ge(k + 1);
                // E[N |C|] and E|C| for the N-dependent rules
                let (n_c, mean_c) = match c {
                    WeightRule::Iid { dist } => {
                        let ec = abs_c(dist)?;
                        (mean_n * ec, ec)
                    }
                    WeightRule::Fixed { values } => {
                        let rho: f64 = values
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v.abs() * n.tail_ge(i as u64 + 1))
                            .sum();
                        (rho, f64::NAN)
                    }
                    WeightRule::ByN { table, default } => {
                        let (mut nc, mut ec, mut pn, mut p) = (0.0, 0.0, 0.0, 0.0);
                        for (k, d) in table {
                            let pk = pmf(*k);
                            let e = abs_c(d)?;
                            nc += pk * *k as f64 * e;
                            ec += pk * e;
                            pn += pk * *k as f64;
                            p += pk;
                        }
                        let ed = abs_c(default)?;
                        nc += (mean_n - pn).max(0.0) * ed;
                        ec += (1.0 - p).max(0.0) * ed;
                        (nc, ec)
                    }
                };
                Ok(Moments {
                    rho: n_c,
                    mean_abs_q,
                    mean_n,
                    mean_abs_cq: (self.mode == Mode::Wbt).then_some(mean_abs_q * mean_c),
                })
            }
        }
    }

    /// Monte Carlo estimates of (rho, E|Q|, E[N], E|CQ|) from `reps` draws.
    pub fn moments_mc(&self, reps: usize, key: StreamKey) -> [MeanSe; 4] {
        let mut acc: [Accumulator; 4] = Default::default();
        for r in 0..reps {
            let (q, n, c) = self.draw(key.fork(r as u64));
            let rho = match self.mode {
                Mode::Wbp => c.iter().map(|x| x.abs()).sum(),
                Mode::Wbt => n as f64 * c[0].abs(),
            };
            acc[0].push(rho);
            acc[1].push(q.abs());
            acc[2].push(n as f64);
            acc[3].push(if self.mode == Mode::Wbt { (c[0] * q).abs() } else { 0.0 });
        }
        acc.map(|a| a.finish())
    }
}

/// Law of the root pair (Q_root, N_root) of a delayed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RootSampler {
    Composed { q: Dist, n: Dist },
    /// Rows of (prob, q, n).
    Table { rows: Vec<(f64, f64, usize)> },
}

impl RootSampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Composed { q, n } => {
                q.validate()?;
                n.validate()?;
                if !n.is_count() {
                    return Err(Error::InvalidSampler(
                        "root N must be a nonnegative integer law".into(),
                    ));
                }
                Ok(())
            }
            Self::Table { rows } => {
                let total: f64 = rows.iter().map(|r| r.0).sum();
                if rows.is_empty() || rows.iter().any(|r| !(r.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidSampler("root table probabilities".into()));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn head(&self, sharing: &Sharing, key: StreamKey) -> NodeHead {
        match self {
            Self::Composed { q, n } => NodeHead {
                q: q.quantile(sharing.uniform(key, POS_Q)),
                n: count_from(n.quantile(sharing.uniform(key, POS_N))),
                row: 0,
            },
            Self::Table { rows } => {
                let row = row_index(rows.iter().map(|r| r.0), sharing.uniform(key, POS_Q), rows.len());
                NodeHead {
                    q: rows[row].1,
                    n: rows[row].2,
                    row,
                }
            }
        }
    }

    /// (E|Q_root|, E[N_root]).
    pub fn moments(&self) -> Result<(f64, f64)> {
        match self {
            Self::Composed { q, n } => Ok((
                q.mean_abs()
                    .ok_or_else(|| Error::MomentUnavailable("E|Q_root| is not finite".into()))?,
                n.mean()
                    .ok_or_else(|| Error::MomentUnavailable("E[N_root] is not finite".into()))?,
            )),
            Self::Table { rows } => Ok((
                rows.iter().map(|r| r.0 * r.1.abs()).sum(),
                rows.iter().map(|r| r.0 * r.2 as f64).sum(),
            )),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Self::Composed { q, n } => q.is_finite_support() && n.is_finite_support(),
            Self::Table { .. } => true,
        }
    }
}
