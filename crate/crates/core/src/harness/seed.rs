//! Deterministic seed derivation.
//!
//! A [`SeedTree`] names a random stream by a root seed and a path of indices
//! (experiment, replica, stream). Derivation chains the SplitMix64 finalizer,
//! which is a bijection on `u64`: two children of the same node never share a
//! seed, and the result depends on the order of the path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTree {
    root: u64,
    path: Vec<u64>,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self {
            root,
            path: Vec::new(),
        }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child node one level below this one.
    pub fn child(&self, index: u64) -> SeedTree {
        let mut path = self.path.clone();
        path.push(index);
        SeedTree {
            root: self.root,
            path,
        }
    }

    /// Seed of this node.
    pub fn seed(&self) -> u64 {
        self.path
            .iter()
            .fold(mix(self.root ^ GOLDEN), |h, &idx| {
                mix(h ^ mix(idx.wrapping_add(GOLDEN)))
            })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

/// Seed reached from `tree` by following `path`.
pub fn split_seed(tree: &SeedTree, path: &[u64]) -> u64 {
    path.iter().fold(tree.clone(), |t, &i| t.child(i)).seed()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_path_same_seed() {
        let t = SeedTree::new(42);
        assert_eq!(split_seed(&t, &[3, 7]), split_seed(&t, &[3, 7]));
        assert_eq!(t.child(3).child(7).seed(), split_seed(&t, &[3, 7]));
    }

    #[test]
    fn path_order_matters() {
        let t = SeedTree::new(42);
        assert_ne!(split_seed(&t, &[0, 1]), split_seed(&t, &[1, 0]));
        assert_ne!(split_seed(&t, &[]), split_seed(&t, &[0]));
        assert_ne!(SeedTree::new(1).seed(), SeedTree::new(2).seed());
    }

    #[test]
    fn million_children_are_distinct() {
        let t = SeedTree::new(7).child(11);
        let seeds: HashSet<u64> = (0..1_000_000u64).map(|i| t.child(i).seed()).collect();
        assert_eq!(seeds.len(), 1_000_000);
    }

    #[test]
    fn derivation_is_pinned() {
        // stability within a major release: changing the mixer breaks stored experiments
        assert_eq!(SeedTree::new(0).seed(), mix(GOLDEN));
        let expected = mix(mix(GOLDEN) ^ mix(5u64.wrapping_add(GOLDEN)));
        assert_eq!(SeedTree::new(0).child(5).seed(), expected);
    }
}
