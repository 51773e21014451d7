//! Keyed random streams.
//!
//! Every node of every tree owns a stream addressed by a hash of its path, so
//! a node's randomness does not depend on the order in which the tree is
//! traversed, and two trees grown from the same key see identical node
//! randomness. Node uniforms are counter-based (SplitMix64 output at a given
//! position of the node's stream), so any position can be read directly.
//! Sequential consumers such as half-edge pairing use [`StreamKey::rng`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one random stream: a global seed plus a hashed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: mix64(GOLDEN),
        }
    }

    /// Key of child `k` (1-based) of the node owning `self`.
    #[inline]
    pub fn child(self, k: u64) -> Self {
        Self {
            seed: self.seed,
            path: mix64(self.path ^ mix64(k.wrapping_add(GOLDEN))),
        }
    }

    /// Derived key for an unrelated purpose (replication index, side of a
    /// coupling, experiment tag). Distinct from every `child` key.
    #[inline]
    pub fn fork(self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            path: mix64(self.path.rotate_left(17) ^ mix64(tag ^ 0xA076_1D64_78BD_642F)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn state(&self) -> u64 {
        mix64(self.path ^ mix64(self.seed.wrapping_mul(GOLDEN) ^ 0xE703_7ED1_A0B4_28DB))
    }

    /// Uniform on (0, 1) at position `pos` of this stream.
    #[inline]
    pub fn uniform(&self, pos: usize) -> f64 {
        let z = self
            .state()
            .wrapping_add((pos as u64).wrapping_add(1).wrapping_mul(GOLDEN));
        open_unit(mix64(z))
    }

    /// A sequential generator for consumers that need many draws.
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path);
        rng
    }
}

/// Map 52 random bits to the open interval (0, 1); both ends are excluded exactly.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn positions_are_stable() {
        let k = StreamKey::new(7).child(1).child(3);
        let a5 = k.uniform(5);
        let _ = k.uniform(0);
        assert_eq!(a5, k.uniform(5));
        assert_ne!(k.uniform(0), k.uniform(1));
    }

    #[test]
    fn children_and_forks_differ() {
        let root = StreamKey::new(1);
        assert_ne!(root.child(1), root.child(2));
        assert_ne!(root.child(1), root.fork(1));
        assert_ne!(root.child(1).child(2), root.child(2).child(1));
        assert_ne!(StreamKey::new(1).child(1), StreamKey::new(2).child(1));
        assert_ne!(StreamKey::new(1).uniform(0), StreamKey::new(2).uniform(0));
    }

    #[test]
    fn uniforms_in_open_interval() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
        // first position over many sibling keys, the access pattern of tree growth
        let root = StreamKey::new(3);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|i| root.child(i).uniform(0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var - 1.0 / 12.0).abs() < 0.003);
        // lag-one correlation across positions within a stream
        let k = root.fork(9);
        let c: f64 = (0..n as usize)
            .map(|i| (k.uniform(i) - 0.5) * (k.uniform(i + 1) - 0.5))
            .sum::<f64>()
            / n as f64;
        assert!(c.abs() < 0.003);
    }

    #[test]
    fn sequential_rng_reproducible() {
        let mut a = StreamKey::new(5).fork(2).rng();
        let mut b = StreamKey::new(5).fork(2).rng();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }
}
