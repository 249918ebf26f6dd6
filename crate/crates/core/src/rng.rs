//! Labelled random streams.
//!
//! Every consumer of randomness (placement, mobility, ...) draws from its own
//! ChaCha8 stream keyed by `(label, seed)`. ChaCha output is specified
//! bit-for-bit, so sequences match across runs and platforms, and adding a
//! draw to one stream never perturbs another.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DeterministicGenerator = ChaCha8Rng;

pub fn rng_stream(label: &str, seed: u64) -> DeterministicGenerator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label));
    rng
}

fn label_hash(label: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(label.as_bytes());
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    fn draws(label: &str, seed: u64, n: usize) -> Vec<u64> {
        let mut rng = rng_stream(label, seed);
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn same_label_and_seed_repeat_exactly() {
        assert_eq!(draws("mobility", 42, 1000), draws("mobility", 42, 1000));
    }

    #[test]
    fn labels_are_independent_streams() {
        assert_ne!(draws("mobility", 42, 16), draws("traffic", 42, 16));
    }

    #[test]
    fn seeds_are_independent_streams() {
        assert_ne!(draws("placement", 1, 16), draws("placement", 2, 16));
    }

    #[test]
    fn stream_is_pinned() {
        // Guards against silent generator changes across dependency upgrades.
        let first = draws("placement", 42, 1)[0];
        assert_eq!(first, draws("placement", 42, 1)[0]);
        assert_eq!(first, PINNED_PLACEMENT_42);
    }

    const PINNED_PLACEMENT_42: u64 = 13_003_404_817_929_227_780;
}
