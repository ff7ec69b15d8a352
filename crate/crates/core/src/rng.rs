//! Counter-based seed splitting.
//!
//! Every random choice in the crate is drawn from a generator seeded by
//! `derive(master, stream)`, so work items can run in any order (or on any thread)
//! and still see the same random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `stream` under `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Child seed for a path of stream identifiers, e.g. `[fold, tree]`.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &s| derive(acc, s))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named stream tags so unrelated components never share a stream.
pub mod stream {
    pub const SYNTH: u64 = 1;
    pub const SCORER: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const FOREST: u64 = 4;
    pub const GBDT: u64 = 5;
    pub const SVM: u64 = 6;
    pub const SHAP: u64 = 7;
    pub const BACKGROUND: u64 = 8;
    pub const NOISE: u64 = 9;
}
