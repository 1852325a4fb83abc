//! Reproducible random number streams.
//!
//! Every stochastic component draws from a ChaCha stream derived from a master
//! seed and a textual label ("gen/train/errors", "hpo", "fit/forest/tree/17",
//! ...). Streams with different labels are statistically independent, so
//! adding a consumer never perturbs the draws of existing ones, and any
//! artefact can be regenerated bit for bit from `(master_seed, label)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a child seed from a master seed and a stream label.
///
/// Uses FNV-1a over the label followed by two splitmix64 finalisation rounds;
/// the mapping is fixed for all time so persisted runs stay reproducible.
pub fn child_seed(master: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(h ^ master).wrapping_add(master))
}

/// A deterministic RNG for the given master seed and stream label.
pub fn stream(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(child_seed(master, label))
}

/// One round of the splitmix64 mixing function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable non-cryptographic hash of arbitrary bytes, used for run stamping.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}
