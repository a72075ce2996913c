//! Deterministic seed derivation.
//!
//! Every source of randomness in a run is a ChaCha stream seeded through
//! [`derive`], so the work-stealing schedule of the evaluation pool can never
//! change results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seed values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of stream labels.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    let mut acc = mix(base);
    for &p in path {
        acc = mix(acc ^ mix(p));
    }
    acc
}

/// A ChaCha RNG for the given derived seed.
pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}
