//! Growing one realization of a weighted branching process or tree.

use super::law::{BranchingVectorSampler, Mode, NodeHead, RootSampler, Sharing};
use crate::error::{Error, Result};
use crate::stream::StreamKey;

/// Default cap on the total number of nodes of one realization.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Position of a node: the sequence of child ranks from the root (empty = root).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeIndex(pub Vec<u32>);

impl NodeIndex {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The ancestor at level `n` (i|n); `None` when n exceeds the length.
    pub fn truncate(&self, n: usize) -> Option<Self> {
        (n <= self.0.len()).then(|| Self(self.0[..n].to_vec()))
    }

    pub fn child(&self, k: u32) -> Self {
        let mut v = self.0.clone();
        v.push(k);
        Self(v)
    }

    /// Stream key of this node under a tree key.
    pub fn key(&self, tree: StreamKey) -> StreamKey {
        self.0.iter().fold(tree, |k, &r| k.child(u64::from(r)))
    }
}

/// Per-generation totals, always kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    pub nodes: usize,
    /// sum over the generation of Q_i Pi_i.
    pub w: f64,
    /// sum over the generation of Pi_i.
    pub w_hom: f64,
    pub has_negative_weight: bool,
}

/// A stored node of a retained generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    /// Position of the parent in the previous generation (0 for the root).
    pub parent: usize,
    /// 1-based rank among the parent's children (0 for the root).
    pub rank: u32,
    /// Path weight Pi_i.
    pub weight: f64,
    /// Mark Q_i.
    pub mark: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowOptions {
    pub cap: usize,
    /// Keep every generation's nodes, not only the level totals.
    pub retain: bool,
}

impl Default for GrowOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_NODE_CAP,
            retain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeRealization {
    pub depth: usize,
    pub levels: Vec<LevelSummary>,
    pub generations: Option<Vec<Vec<NodeRecord>>>,
}

impl TreeRealization {
    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.nodes).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.levels.iter().map(|l| l.nodes).sum()
    }

    /// Index of the `i`-th stored node of generation `level`.
    pub fn node_index(&self, level: usize, mut i: usize) -> Option<NodeIndex> {
        let gens = self.generations.as_ref()?;
        gens.get(level)?.get(i)?;
        let mut path = Vec::with_capacity(level);
        for l in (1..=level).rev() {
            let rec = gens[l][i];
            path.push(rec.rank);
            i = rec.parent;
        }
        path.reverse();
        Some(NodeIndex(path))
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j > self.depth {
            return Err(Error::DepthExceeded {
                requested: j,
                depth: self.depth,
            });
        }
        Ok(())
    }
}

/// W^(j) = sum over generation j of Q_i Pi_i.
pub fn w_process(tree: &TreeRealization, j: usize) -> Result<f64> {
    tree.check_level(j)?;
    Ok(tree.levels[j].w)
}

/// R^(k) = W^(0) + ... + W^(k).
pub fn r_process(tree: &TreeRealization, k: usize) -> Result<f64> {
    tree.check_level(k)?;
    Ok(tree.levels[..=k].iter().map(|l| l.w).sum())
}

/// Homogeneous W^(j): 1 at j = 0, else the sum of Pi_i over generation j.
pub fn homogeneous_w(tree: &TreeRealization, j: usize) -> Result<f64> {
    tree.check_level(j)?;
    if let Some(g) = tree.levels[..=j].iter().position(|l| l.has_negative_weight) {
        return Err(Error::NegativeWeight(g));
    }
    Ok(if j == 0 { 1.0 } else { tree.levels[j].w_hom })
}

/// w / rho^j.
pub fn martingale_normalize(w: f64, rho: f64, j: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho = {rho} must be positive")));
    }
    Ok(w / rho.powi(j as i32))
}

#[derive(Clone, Copy)]
struct Pending {
    key: StreamKey,
    pi: f64,
    head: NodeHead,
    parent: usize,
    rank: u32,
}

/// Grows one realization to `depth` generations.
///
/// WBP: a node's vector gives its mark Q, its number of children N and the
/// children's edge weights. WBT: every non-root node draws its own (Q, N, C)
/// and its path weight is its own C times its parent's path weight; the root
/// pair comes from `root` when given, else from the generic law.
pub fn grow(
    sampler: &BranchingVectorSampler,
    root: Option<&RootSampler>,
    depth: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<TreeRealization> {
    grow_with(sampler, &Sharing::ALL, root, &Sharing::ALL, depth, opts, key)
}

pub(crate) fn grow_with(
    sampler: &BranchingVectorSampler,
    sharing: &Sharing,
    root: Option<&RootSampler>,
    root_sharing: &Sharing,
    depth: usize,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<TreeRealization> {
    if opts.cap == 0 {
        return Err(Error::Domain("node cap must be at least 1".into()));
    }
    if root.is_some() && sampler.mode == Mode::Wbp {
        return Err(Error::InvalidSampler(
            "a separate root law is only defined for weighted branching trees".into(),
        ));
    }
    let head = match root {
        Some(r) => r.head(root_sharing, key),
        None => sampler.head(sharing, key),
    };
    let mut current = vec![Pending {
        key,
        pi: 1.0,
        head,
        parent: 0,
        rank: 0,
    }];
    let mut levels = Vec::with_capacity(depth + 1);
    let mut gens: Option<Vec<Vec<NodeRecord>>> = opts.retain.then(Vec::new);
    let mut total = 1usize;
    let mut next: Vec<Pending> = Vec::new();

    for level in 0..=depth {
        let mut summary = LevelSummary {
            nodes: current.len(),
            w: 0.0,
            w_hom: 0.0,
            has_negative_weight: false,
        };
        let expand = level < depth;
        next.clear();
        for (idx, node) in current.iter().enumerate() {
            let n = node.head.n;
            summary.w += node.head.q * node.pi;
            summary.w_hom += node.pi;
            summary.has_negative_weight |= node.pi < 0.0;
            if !expand || n == 0 {
                continue;
            }
            total += n;
            if total > opts.cap {
                return Err(Error::ExplosionCap {
                    generation: level + 1,
                    cap: opts.cap,
                });
            }
            for k in 1..=n {
                let ck = node.key.child(k as u64);
                let (pi, h) = match sampler.mode {
                    Mode::Wbp => {
                        let c = sampler.weight(sharing, node.key, &node.head, k);
                        (node.pi * c, sampler.head(sharing, ck))
                    }
                    Mode::Wbt => {
                        let h = sampler.head(sharing, ck);
                        (node.pi * sampler.weight(sharing, ck, &h, 1), h)
                    }
                };
                next.push(Pending {
                    key: ck,
                    pi,
                    head: h,
                    parent: idx,
                    rank: k as u32,
                });
            }
        }
        if let Some(g) = gens.as_mut() {
            g.push(
                current
                    .iter()
                    .map(|p| NodeRecord {
                        parent: p.parent,
                        rank: p.rank,
                        weight: p.pi,
                        mark: p.head.q,
                        n: p.head.n,
                    })
                    .collect(),
            );
        }
        levels.push(summary);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(TreeRealization {
        depth,
        levels,
        generations: gens,
    })
}
