//! Seeded randomness.
//!
//! Every random draw in the toolkit comes from ChaCha8 (`rand_chacha`), seeded
//! from a 64-bit seed with `SeedableRng::seed_from_u64`. Independent sub-streams
//! are derived by selecting a ChaCha stream number, so a component can be
//! re-run in isolation without perturbing its siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent numbered stream.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the generators, kept in one place so they never collide.
pub mod streams {
    pub const KMEANS: u64 = 1;
    pub const LEAKAGE: u64 = 2;
    pub const PERMUTATION: u64 = 3;
    pub const SPACES: u64 = 10;
    pub const DEMOGRAPHICS: u64 = 11;
    pub const RETRIEVAL: u64 = 12;
    pub const SKEW: u64 = 13;
    pub const VQA: u64 = 14;
    pub const CAPTIONS: u64 = 15;
    pub const SCORES: u64 = 16;
    pub const LEVELS: u64 = 17;
    /// Per-model streams start here; model `m` uses `PER_MODEL + m`.
    pub const PER_MODEL: u64 = 1 << 20;
}
