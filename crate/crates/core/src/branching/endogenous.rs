//! Truncated samples of the endogenous solution R = sum_k sum_{A_k} Pi_i Q_i.

use super::law::{BranchingVectorSampler, Mode, RootSampler};
use super::tree::{grow, r_process, GrowOptions};
use crate::error::{Error, Result};
use crate::stream::StreamKey;

/// Deepest truncation level tried before giving up on a tolerance.
const MAX_LEVEL: usize = 10_000;

/// Bound on E|R - R^(k)| for every k, from E|W^(j)| <= E|Q| rho^j (WBP) or
/// E|W^(j)| <= E[N_root] E|CQ| rho^(j-1) for j >= 1 (WBT).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    rho: f64,
    coef: f64,
    /// 1 for WBP (first neglected term rho^(k+1)), 0 for WBT.
    offset: i32,
}

impl TailBound {
    pub fn new(sampler: &BranchingVectorSampler, root: Option<&RootSampler>) -> Result<Self> {
        let m = sampler.moments()?;
        if !(m.rho < 1.0) {
            return Err(Error::ContractionRequired(m.rho));
        }
        let (coef, offset) = match sampler.mode {
            Mode::Wbp => (m.mean_abs_q, 1),
            Mode::Wbt => {
                let root_n = match root {
                    Some(r) => r.moments()?.1,
                    None => m.mean_n,
                };
                (root_n * m.mean_abs_cq.expect("WBT moments carry E|CQ|"), 0)
            }
        };
        Ok(Self {
            rho: m.rho,
            coef,
            offset,
        })
    }

    /// sum_{j > k} of the generation bounds.
    pub fn at(&self, k: usize) -> f64 {
        self.coef * self.rho.powi(k as i32 + self.offset) / (1.0 - self.rho)
    }

    /// Smallest k with `at(k) <= eps`.
    pub fn level_for(&self, eps: f64) -> Result<usize> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("tolerance {eps} must be positive")));
        }
        (0..=MAX_LEVEL)
            .find(|&k| self.at(k) <= eps)
            .ok_or_else(|| Error::Domain(format!("tolerance {eps} needs more than {MAX_LEVEL} levels")))
    }
}

/// One sample of R^(k) with k the smallest level whose analytic tail bound is
/// at most `eps`; returns (value, k, tail bound at k).
pub fn endogenous_r_sample(
    sampler: &BranchingVectorSampler,
    root: Option<&RootSampler>,
    eps: f64,
    opts: GrowOptions,
    key: StreamKey,
) -> Result<(f64, usize, f64)> {
    let tail = TailBound::new(sampler, root)?;
    let k = tail.level_for(eps)?;
    let tree = grow(sampler, root, k, opts, key)?;
    Ok((r_process(&tree, k)?, k, tail.at(k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use crate::branching::law::WeightRule;

    #[test]
    fn childless_law_is_exact() {
        let s = BranchingVectorSampler::deterministic(3.0, 0, 0.5);
        let (r, k, tail) = endogenous_r_sample(&s, None, 1e-9, GrowOptions::default(), StreamKey::new(1)).unwrap();
        assert_eq!(r, 3.0);
        assert_eq!(k, 0);
        assert_eq!(tail, 0.0);
    }

    #[test]
    fn quarter_tree_converges_to_two() {
        let s = BranchingVectorSampler::deterministic(1.0, 2, 0.25);
        let (r, k, tail) = endogenous_r_sample(&s, None, 1e-3, GrowOptions::default(), StreamKey::new(1)).unwrap();
        assert!((r - 2.0).abs() <= 1e-3);
        assert!(tail <= 1e-3);
        // the bound is the exact remainder here: 2^{-k}
        assert!((tail - 0.5f64.powi(k as i32)).abs() < 1e-15);
    }

    #[test]
    fn requires_contraction() {
        let s = BranchingVectorSampler::deterministic(1.0, 2, 0.5);
        assert_eq!(TailBound::new(&s, None).unwrap_err(), Error::ContractionRequired(1.0));
    }

    #[test]
    fn wbt_tail_uses_root_offspring_mean() {
        let s = BranchingVectorSampler::composed(
            Mode::Wbt,
            Dist::point(2.0),
            Dist::point(2.0),
            WeightRule::Iid { dist: Dist::point(0.25) },
        )
        .unwrap();
        let root = RootSampler::Composed { q: Dist::point(1.0), n: Dist::point(4.0) };
        let t = TailBound::new(&s, Some(&root)).unwrap();
        // W^(j) = 4 * 0.5 * 0.5^{j-1} exactly, so the tail past k is 4 * 0.5^k
        for k in 0..6 {
            assert!((t.at(k) - 4.0 * 0.5f64.powi(k as i32)).abs() < 1e-12);
        }
    }
}
