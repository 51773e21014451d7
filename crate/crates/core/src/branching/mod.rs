//! Weighted branching processes (WBP) and weighted branching trees (WBT).
//!
//! A node's randomness is read from its own keyed stream, so the same key
//! always produces the same tree and two samplers grown from one key share
//! node randomness.

mod endogenous;
mod law;
mod tree;

pub use endogenous::{endogenous_r_sample, TailBound};
pub use law::{BranchingVectorSampler, Mode, Moments, RootSampler, Sharing, TableRow, VectorLaw, WeightRule};
pub use tree::{
    grow, homogeneous_w, martingale_normalize, r_process, w_process, GrowOptions, LevelSummary,
    NodeIndex, NodeRecord, TreeRealization, DEFAULT_NODE_CAP,
};

pub(crate) use law::NodeHead;
pub(crate) use tree::grow_with;
