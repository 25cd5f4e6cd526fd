//! Reproducible random streams: one ChaCha stream per (master seed, run).

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(run_index);
    r
}
