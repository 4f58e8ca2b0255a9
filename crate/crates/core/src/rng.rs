//! Keyed random streams: every parallel work item draws from its own
//! ChaCha stream selected by `(seed, index)`, so results do not depend on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` of the generator seeded with `seed`.
pub fn keyed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Keyed stream in a separate domain (e.g. a second sampling phase).
pub fn keyed_rng_in(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    keyed_rng(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15), index)
}
