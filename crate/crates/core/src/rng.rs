//! Seeded randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and a per-purpose stream id. Shuffles use
//! `rand::seq::SliceRandom::shuffle` (Fisher-Yates). Both crates are pinned to
//! exact versions in the manifest, so a given seed reproduces the same
//! assignment across builds of this version. Assignment files, not seeds, are
//! the portable record of a split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator, recorded in metadata sidecars.
pub const ALGORITHM: &str = "chacha8/rand-0.9.5/fisher-yates";

pub(crate) mod stream {
    pub const RANDOM_BY_SCAN: u64 = 1;
    pub const BY_SUBJECT: u64 = 2;
    pub const VISIT_HISTORY: u64 = 3;
    pub const GROUP_KFOLD: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const SYNTH_EXACT: u64 = 6;
}

pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
