//! Word shingles, Jaccard similarity and MinHash provenance.
//!
//! Each source sentence is fingerprinted by the minimum of a fixed 32-bit
//! hash over its word 3-shingles. The hash family is versioned: the version
//! string is folded into the hash state, so bumping [`MINHASH_VERSION`]
//! changes every value and stale provenance can never silently match.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::seed::{fnv1a64, splitmix64, FNV_PRIME};

/// Hash family identifier recorded in every signature and KU file.
pub const MINHASH_VERSION: &str = "mxs32-v1/3shingle";

/// Word n-gram size used for sentence hashes.
pub const SENTENCE_SHINGLE_N: usize = 3;

/// Default seed for sentence provenance hashes. Kept constant across runs so
/// hashes from different extraction runs are comparable.
pub const DEFAULT_MINHASH_SEED: u64 = 0x414c_4558_414e_4452;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProvenanceError {
    #[error("sentence {0} is empty after normalization")]
    EmptySentence(usize),
    #[error("cannot sign an empty shingle set")]
    EmptyShingleSet,
    #[error("signature size k must be at least 1")]
    ZeroPermutations,
}

/// Lowercases, removes every non-alphanumeric character, and splits on
/// whitespace. Punctuation is deleted rather than replaced, so `259,000`
/// and `259000` produce the same token.
pub fn normalize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let token: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        if !token.is_empty() {
            out.push(token);
        }
    }
    out
}

/// A contiguous run of `n` normalized word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Shingle {
    pub n: usize,
    pub tokens: Vec<String>,
}

impl Shingle {
    pub fn new(tokens: Vec<String>) -> Self {
        Self {
            n: tokens.len(),
            tokens,
        }
    }
}

impl fmt::Display for Shingle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

pub type ShingleSet = HashSet<Shingle>;

/// All word n-grams of `text` after normalization. Fewer than `n` words (or
/// `n == 0`) gives the empty set.
pub fn shingle_set(text: &str, n: usize) -> ShingleSet {
    shingles_of(&normalize_words(text), n)
}

pub fn shingles_of(words: &[String], n: usize) -> ShingleSet {
    if n == 0 || words.len() < n {
        return ShingleSet::new();
    }
    words.windows(n).map(|w| Shingle::new(w.to_vec())).collect()
}

/// `|a ∩ b| / |a ∪ b|`, and 0.0 when both sets are empty.
pub fn jaccard(a: &ShingleSet, b: &ShingleSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|s| large.contains(*s)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Number of distinct shingles present in both sets.
pub fn shared_count(a: &ShingleSet, b: &ShingleSet) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|s| large.contains(*s)).count()
}

/// One provenance hash per source sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceHash {
    pub value: u32,
    pub sentence_index: usize,
}

/// The 64-bit mixed hash of a shingle under `version` and `seed`.
/// Slot 0 of every signature and every sentence hash is its upper half.
fn shingle_hash64(version: &str, shingle: &[String], seed: u64) -> u64 {
    let mut h = fnv1a64(version.as_bytes()) ^ seed;
    for token in shingle {
        for b in token.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    // multiply-xor-shift finalizer
    splitmix64(h)
}

/// The 32-bit shingle hash behind sentence MinHashes.
pub fn shingle_hash(shingle: &Shingle, seed: u64) -> u32 {
    shingle_hash_versioned(MINHASH_VERSION, shingle, seed)
}

pub fn shingle_hash_versioned(version: &str, shingle: &Shingle, seed: u64) -> u32 {
    (shingle_hash64(version, &shingle.tokens, seed) >> 32) as u32
}

/// Minimum hash over the word 3-shingles of a sentence; sentences with fewer
/// than three words fall back to unigrams.
pub fn sentence_minhash(sentence: &Sentence, seed: u64) -> Result<SentenceHash, ProvenanceError> {
    sentence_minhash_text(&sentence.text, sentence.index, seed)
}

pub fn sentence_minhash_text(
    text: &str,
    sentence_index: usize,
    seed: u64,
) -> Result<SentenceHash, ProvenanceError> {
    sentence_minhash_versioned(MINHASH_VERSION, text, sentence_index, seed)
}

pub fn sentence_minhash_versioned(
    version: &str,
    text: &str,
    sentence_index: usize,
    seed: u64,
) -> Result<SentenceHash, ProvenanceError> {
    let set = sentence_shingles(text);
    set.iter()
        .map(|s| shingle_hash_versioned(version, s, seed))
        .min()
        .map(|value| SentenceHash {
            value,
            sentence_index,
        })
        .ok_or(ProvenanceError::EmptySentence(sentence_index))
}

/// The shingle set a sentence hash is computed over.
pub fn sentence_shingles(text: &str) -> ShingleSet {
    let words = normalize_words(text);
    if words.len() >= SENTENCE_SHINGLE_N {
        shingles_of(&words, SENTENCE_SHINGLE_N)
    } else {
        shingles_of(&words, 1)
    }
}

/// k-permutation MinHash signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub k: usize,
    pub values: Vec<u32>,
    pub seed: u64,
    pub version: String,
}

impl MinHashSignature {
    /// Fraction of agreeing slots, an unbiased estimate of Jaccard. `None`
    /// if the signatures were built with different parameters.
    pub fn estimate_jaccard(&self, other: &MinHashSignature) -> Option<f64> {
        if self.k != other.k || self.seed != other.seed || self.version != other.version {
            return None;
        }
        let agree = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a == b)
            .count();
        Some(agree as f64 / self.k as f64)
    }
}

pub fn minhash_signature(
    shingles: &ShingleSet,
    k: usize,
    seed: u64,
) -> Result<MinHashSignature, ProvenanceError> {
    if k == 0 {
        return Err(ProvenanceError::ZeroPermutations);
    }
    if shingles.is_empty() {
        return Err(ProvenanceError::EmptyShingleSet);
    }
    let slot_keys: Vec<u64> = (1..k as u64)
        .map(|i| splitmix64(seed ^ i.wrapping_mul(0x9e37_79b9)))
        .collect();
    let mut values = vec![u32::MAX; k];
    for s in shingles {
        let base = shingle_hash64(MINHASH_VERSION, &s.tokens, seed);
        values[0] = values[0].min((base >> 32) as u32);
        for (slot, key) in values[1..].iter_mut().zip(&slot_keys) {
            let h = (splitmix64(base ^ key) >> 32) as u32;
            if h < *slot {
                *slot = h;
            }
        }
    }
    Ok(MinHashSignature {
        k,
        values,
        seed,
        version: MINHASH_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> ShingleSet {
        items
            .iter()
            .map(|s| Shingle::new(s.split(' ').map(str::to_string).collect()))
            .collect()
    }

    #[test]
    fn duplicate_bigrams_collapse() {
        assert_eq!(shingle_set("A cat. A cat.", 2), set(&["a cat", "cat a"]));
        assert!(shingle_set("hello", 3).is_empty());
        assert_eq!(shingle_set("a b c", 1), set(&["a", "b", "c"]));
    }

    #[test]
    fn jaccard_basics() {
        let a = set(&["x y", "y z"]);
        let b = set(&["p q"]);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &b), 0.0);
        assert_eq!(jaccard(&ShingleSet::new(), &ShingleSet::new()), 0.0);
    }

    #[test]
    fn hand_enumerated_trigram_example() {
        // A: the cat sat | cat sat on | sat on the | on the mat | the mat today
        // B: the cat sat | cat sat on | sat on the | on the red | the red mat
        // shared 3, union 7.
        let a = shingle_set("the cat sat on the mat today", 3);
        let b = shingle_set("the cat sat on the red mat", 3);
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 5);
        assert_eq!(shared_count(&a, &b), 3);
        assert!((jaccard(&a, &b) - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn sentence_hash_is_deterministic() {
        let a = sentence_minhash_text("The Moon was closer to Earth.", 0, 7).unwrap();
        let b = sentence_minhash_text("The Moon was closer to Earth.", 0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            sentence_minhash_text("!!! ...", 3, 7),
            Err(ProvenanceError::EmptySentence(3))
        );
    }

    #[test]
    fn short_sentences_use_unigrams() {
        let h = sentence_minhash_text("Hi there", 0, 1).unwrap();
        let expected = ["hi", "there"]
            .iter()
            .map(|w| shingle_hash(&Shingle::new(vec![w.to_string()]), 1))
            .min()
            .unwrap();
        assert_eq!(h.value, expected);
    }

    #[test]
    fn seed_changes_values() {
        // Over 1,000 pseudo-random sentences, two seeds must almost never agree.
        let mut rng = crate::seed::rng_from(99);
        use rand::Rng;
        let mut collisions = 0;
        for i in 0..1000 {
            let words: Vec<String> = (0..rng.gen_range(3..15))
                .map(|_| format!("w{}", rng.gen_range(0..5000)))
                .collect();
            let text = words.join(" ");
            let a = sentence_minhash_text(&text, i, 1).unwrap();
            let b = sentence_minhash_text(&text, i, 2).unwrap();
            if a.value == b.value {
                collisions += 1;
            }
        }
        assert!(collisions < 10, "collisions = {collisions}");
    }

    #[test]
    fn version_constant_changes_outputs() {
        let text = "A fixed sentence for version drift checks.";
        let a = sentence_minhash_versioned(MINHASH_VERSION, text, 0, 5).unwrap();
        let b = sentence_minhash_versioned("mxs32-v2/3shingle", text, 0, 5).unwrap();
        assert_ne!(a.value, b.value);
        let sig = minhash_signature(&shingle_set(text, 3), 4, 5).unwrap();
        assert_eq!(sig.version, MINHASH_VERSION);
    }

    #[test]
    fn signature_k1_matches_sentence_hash() {
        let text = "The closest distance of the Moon to Earth";
        let sig = minhash_signature(&sentence_shingles(text), 1, 11).unwrap();
        assert_eq!(
            sig.values,
            vec![sentence_minhash_text(text, 0, 11).unwrap().value]
        );
    }

    #[test]
    fn signature_errors() {
        assert_eq!(
            minhash_signature(&ShingleSet::new(), 8, 0),
            Err(ProvenanceError::EmptyShingleSet)
        );
        assert_eq!(
            minhash_signature(&set(&["a"]), 0, 0),
            Err(ProvenanceError::ZeroPermutations)
        );
    }

    #[test]
    fn identical_sets_identical_signatures() {
        let s = shingle_set("one two three four five six", 2);
        assert_eq!(
            minhash_signature(&s, 64, 3).unwrap(),
            minhash_signature(&s, 64, 3).unwrap()
        );
    }
}
