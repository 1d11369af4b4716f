//! Seeded sample inputs shared by the benchmarks.

use alexandria_core::{Document, DomainTag};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &[
    "the", "orbit", "moon", "tidal", "signal", "sample", "cohort", "graph", "lemma", "field",
    "tissue", "kernel", "trial", "rate", "model", "measured", "between", "observed", "increase",
    "energy", "vertex", "bound",
];

/// `words` words of prose-like text split into sentences of 8 to 30 words.
pub fn sample_text(words: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut left = words;
    while left > 0 {
        let len = rng.gen_range(8..=30).min(left);
        let mut s: Vec<&str> = (0..len).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
        s[0] = "Results";
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s.join(" "));
        out.push('.');
        left -= len;
    }
    out
}

/// A document of `paragraphs` paragraphs of roughly 120 words each.
pub fn sample_document(paragraphs: usize, seed: u64) -> Document {
    let body: Vec<String> = (0..paragraphs)
        .map(|i| sample_text(120, seed.wrapping_add(i as u64)))
        .collect();
    Document::new(
        format!("bench-{seed}"),
        "Sample",
        vec![],
        &body.join("\n\n"),
        DomainTag::Physics,
    )
    .expect("sample document is valid")
}
