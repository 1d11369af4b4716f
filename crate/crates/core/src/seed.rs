//! Named random substreams derived from one root seed.
//!
//! Every stochastic step (extraction, MCQ generation, option shuffling, word
//! scrambling) draws from its own stream so that adding draws to one stage
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EXTRACTION: &str = "extraction";
pub const MCQ: &str = "mcq";
pub const SHUFFLE: &str = "shuffle";
pub const SCRAMBLE: &str = "scramble";
pub const ANSWER: &str = "answer";
pub const EMBED: &str = "embed";
pub const RECONSTRUCT: &str = "reconstruct";

/// Derives the seed of substream `stream` from `root`.
pub fn derive_seed(root: u64, stream: &str) -> u64 {
    let mut h = fnv1a64(stream.as_bytes());
    h ^= root;
    splitmix64(h)
}

/// Derives a seed for an item (document, question, ...) inside a substream.
pub fn item_seed(stream_seed: u64, item: &str) -> u64 {
    splitmix64(stream_seed ^ fnv1a64(item.as_bytes()))
}

pub fn rng_for(root: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub(crate) const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) const fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(FNV_PRIME);
        i += 1;
    }
    h
}

pub(crate) const fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
