//! Seed derivation: every random object draws from its own ChaCha stream
//! keyed by a root seed and a path of tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_CORE: u64 = 0x636f_7265;
pub(crate) const TAG_FACTOR: u64 = 0x6661_6374;
pub(crate) const TAG_NOISE: u64 = 0x6e6f_6973;
pub(crate) const TAG_ATTEMPT: u64 = 0x6174_7470;
pub(crate) const TAG_MODEL: u64 = 0x6d6f_6465;
pub(crate) const TAG_SERIES: u64 = 0x7365_7269;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with a sequence of tags into a child seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(root), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
