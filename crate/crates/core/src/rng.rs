//! Pinned random number generation.
//!
//! All randomized stages use ChaCha8 seeded from a `u64`. Independent work
//! items (samples, repetitions, nodes) draw from separate ChaCha streams of
//! the same key, so outputs do not depend on scheduling or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CltRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> CltRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> CltRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for a named pipeline stage.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    substream(master, tag.wrapping_add(1 << 32)).next_u64()
}

/// A fresh seed from OS entropy, for commands run without `--seed`.
pub fn entropy_seed() -> u64 {
    rand::rngs::OsRng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(mut r: CltRng) -> Vec<u64> {
        (0..4).map(|_| r.next_u64()).collect()
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        assert_eq!(draw(substream(9, 1)), draw(substream(9, 1)));
        assert_ne!(draw(substream(9, 1)), draw(substream(9, 2)));
        assert_ne!(derive_seed(9, 0), derive_seed(9, 1));
    }

    #[test]
    fn pinned_first_output() {
        // Guards against silent changes of the generator algorithm.
        let mut r = rng_from_seed(0);
        let first = r.next_u64();
        let mut again = rng_from_seed(0);
        assert_eq!(first, again.next_u64());
        assert_eq!(first, PINNED_SEED0_FIRST);
    }

    const PINNED_SEED0_FIRST: u64 = 13080132717333068652;
}
