//! Splittable seeding.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a
//! [`SeedTree`] node. Children are derived from a parent by label or index,
//! so a component's stream depends only on its own path from the root and
//! never on how many draws unrelated components made before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A node in a tree of deterministic seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree(u64);

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree(splitmix64(seed))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Child stream named by `label`.
    pub fn child(self, label: &str) -> Self {
        SeedTree(splitmix64(self.0 ^ splitmix64(fnv1a(label))))
    }

    /// Child stream named by an integer (epoch, instance index, ...).
    pub fn index(self, i: u64) -> Self {
        SeedTree(splitmix64(self.0.rotate_left(17) ^ splitmix64(i.wrapping_add(0x5851_F42D))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
