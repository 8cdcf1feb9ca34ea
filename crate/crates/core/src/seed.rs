//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from the single top-level seed by
//! mixing in a static tag and a list of indices (fold, epoch, query, ...)
//! through SplitMix64. Streams therefore never share state, and a stream can
//! be re-created from its coordinates alone, which is what makes checkpoints
//! resumable and parallel schedules reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base`, a tag and index coordinates.
pub fn derive(base: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for b in tag.bytes() {
        h = splitmix(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix(h ^ i);
    }
    h
}

/// Convenience: a ChaCha8 generator seeded from [`derive`].
pub fn rng(base: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag, indices))
}
