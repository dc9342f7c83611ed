//! Root-seed fan-out.
//!
//! Every random stream in the engine is derived from one root seed through
//! a keyed mix, so a whole pipeline run regenerates bit-exactly from a
//! single `--seed` while independent components (sessions, tasks, sampling
//! strategies) still see decorrelated streams.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 finalizer; good avalanche for cheap seed derivation.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a child seed from `root`, a stream label, and an index.
pub fn child_seed(root: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps distinct stream names decorrelated even
    // when their indices collide.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    mix(root ^ mix(h) ^ mix(index.wrapping_mul(0x9e3779b97f4a7c15)))
}

/// Seeded deterministic generator for a named child stream.
pub fn stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(root, label, index))
}
