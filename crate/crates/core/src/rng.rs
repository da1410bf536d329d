//! Seed derivation. Every stochastic step takes an explicit `u64` seed and
//! child streams are derived from `(seed, index)` so results do not depend on
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for child stream `index` of `seed` (`seed ⊕ index`, then mixed).
#[inline]
pub fn derive(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn child(seed: u64, index: u64) -> Rng {
    rng(derive(seed, index))
}
