//! Deterministic RNG streams.
//!
//! Every source of randomness in a run is a ChaCha stream derived from the run
//! seed and a short label, so adding a consumer never perturbs the draws seen
//! by existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a seed and a label into a fresh stream seed (splitmix64 over both).
fn mix(seed: u64, label: &str) -> u64 {
    let mut z = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &b in label.as_bytes() {
        z = z.wrapping_add(b as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z ^= z >> 31;
    }
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named RNG stream for `seed`.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, label))
}

/// A named stream further indexed by a counter (per-episode, per-eval, ...).
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, label) ^ index.wrapping_mul(0x2545_f491_4f6c_dd1d))
}
