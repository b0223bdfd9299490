//! Counter-based generator streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is
//! derived from the master seed and a path of counters (purpose tag, step,
//! sample index, ...). Streams never share state, so evaluating work items
//! in any order or in parallel yields the same results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for the first path element.
pub mod tag {
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const ROLLOUT: u64 = 0x524f_4c4c;
    pub const EVAL: u64 = 0x4556_414c;
    pub const DATAGEN: u64 = 0x4441_5441;
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `seed` with SplitMix64.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
