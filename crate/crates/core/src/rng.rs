//! Portable random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose
//! 64-bit seed is derived from a base seed and a path of stream indices
//! (for example `[TAG_FOLDS, repeat]`) by chaining SplitMix64 finalizers.
//! Both algorithms are fully specified, so the streams are reproducible
//! across platforms and across implementations in other languages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tag for fold assignment inside cross-validation.
pub const TAG_FOLDS: u64 = 1;
/// Stream tag for learner seeds inside cross-validation.
pub const TAG_TRAINER: u64 = 2;
/// Stream tag for synthetic data generation.
pub const TAG_SYNTH: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with each index of `path` in turn.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
