//! Deterministic, splittable seeding.
//!
//! Experiments fan out over (dataset, condition, run, candidate, split) and
//! must reproduce bit-exactly regardless of execution order. A [`Seed`] is a
//! 64-bit state that can be split into independent child seeds by tag, so
//! every task derives its own stream without sharing mutable RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A splittable seed for reproducible random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(u64);

impl Seed {
    pub fn new(value: u64) -> Self {
        Seed(value)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Derives an independent child seed. Distinct tags give decorrelated
    /// children; the derivation is a pure function of (state, tag).
    pub fn child(self, tag: u64) -> Seed {
        Seed(mix64(self.0 ^ mix64(tag)))
    }

    /// A fresh generator for this seed. ChaCha8 is portable across
    /// platforms, so streams do not depend on the host.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed(value)
    }
}

// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; used to derive stable seeds from dataset names.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
