//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed. Sub-seeds are derived from a master seed and a path of integer
//! coordinates (group, grid index, fold, ...) with the SplitMix64 finalizer,
//! so each stream depends only on its coordinates and never on the order in
//! which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes `parts` into `seed`, one coordinate at a time.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags keep sub-seeds for different purposes apart.
pub(crate) mod tag {
    pub const SAMPLE: u64 = 1;
    pub const CLASSIFIER: u64 = 2;
    pub const QUANTIFIER: u64 = 3;
    pub const FOLDS: u64 = 4;
}
