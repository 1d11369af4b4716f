use alexandria_core::corpus::{chunk_document, ApproxTokenCounter, ChunkFlag, TokenCounter};
use alexandria_core::embed_baseline::{cosine, scramble_words};
use alexandria_core::ku_model::{parse_ku_document, serialize_ku_document};
use alexandria_core::overlap_analysis::plagiarism_score;
use alexandria_core::provenance::{jaccard, minhash_signature, normalize_words, shingle_set};
use alexandria_core::{ChunkPolicy, Document, DomainTag};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "orbit", "moon", "field", "fluid", "tidal", "rate", "model",
    "Mars", "3.5", "km", "energy", "data",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..40).prop_map(|ws| {
        let mut s = ws.join(" ");
        let first = s.remove(0).to_ascii_uppercase();
        s.insert(0, first);
        s + "."
    })
}

fn body() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(sentence(), 1..8), 1..6).prop_map(|paras| {
        paras
            .into_iter()
            .map(|p| p.join(" "))
            .collect::<Vec<_>>()
            .join("\n\n")
    })
}

fn words_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 0..30).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunks_partition_sentences_in_order(b in body(), min in 10usize..80, extra in 0usize..200) {
        let doc = Document::new("d", "t", vec![], &b, DomainTag::Physics).unwrap();
        let policy = ChunkPolicy::TokenRange { min, max: min + extra };
        let chunks = chunk_document(&doc, policy).unwrap();
        let sentences = doc.sentences();
        let flat: Vec<_> = chunks.iter().flat_map(|c| c.sentences.iter().cloned()).collect();
        prop_assert_eq!(&flat, &sentences);
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.chunk_index, i);
            prop_assert!(!c.sentences.is_empty());
            let tokens = ApproxTokenCounter.count(&c.text());
            if tokens > min + extra {
                prop_assert_eq!(c.sentences.len(), 1);
                prop_assert_eq!(c.flag, Some(ChunkFlag::Oversized));
            }
        }
    }

    #[test]
    fn chunking_is_deterministic(b in body()) {
        let doc = Document::new("d", "t", vec![], &b, DomainTag::Medical).unwrap();
        let p = ChunkPolicy::WordTarget { words: 30 };
        prop_assert_eq!(chunk_document(&doc, p).unwrap(), chunk_document(&doc, p).unwrap());
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in words_text(), b in words_text(), n in 1usize..6) {
        let (sa, sb) = (shingle_set(&a, n), shingle_set(&b, n));
        let j = jaccard(&sa, &sb);
        prop_assert_eq!(j, jaccard(&sb, &sa));
        prop_assert!((0.0..=1.0).contains(&j));
        if !sa.is_empty() {
            prop_assert_eq!(jaccard(&sa, &sa), 1.0);
        }
    }

    #[test]
    fn minhash_of_identical_sets_agrees(a in words_text(), seed in any::<u64>()) {
        let s = shingle_set(&a, 2);
        prop_assume!(!s.is_empty());
        let x = minhash_signature(&s, 64, seed).unwrap();
        let y = minhash_signature(&s, 64, seed).unwrap();
        prop_assert_eq!(x.estimate_jaccard(&y), Some(1.0));
    }

    #[test]
    fn plagiarism_is_a_percentage(a in words_text(), b in words_text()) {
        let p = plagiarism_score(&a, &b);
        prop_assert!((0.0..=100.0).contains(&p));
        prop_assert_eq!(p, plagiarism_score(&b, &a));
    }

    #[test]
    fn scrambling_preserves_the_word_multiset(a in words_text(), seed in any::<u64>()) {
        prop_assume!(normalize_words(&a).len() >= 2);
        let s = scramble_words(&a, seed).unwrap();
        let mut x = normalize_words(&a);
        let mut y = normalize_words(&s);
        x.sort();
        y.sort();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn cosine_is_bounded(u in prop::collection::vec(-10.0f64..10.0, 8), v in prop::collection::vec(-10.0f64..10.0, 8)) {
        prop_assume!(u.iter().any(|x| *x != 0.0) && v.iter().any(|x| *x != 0.0));
        let c = cosine(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}

#[test]
fn ku_documents_round_trip_through_bytes() {
    let body = "The Cassini probe reached Saturn in 2004. It measured ring particles of 10 m.";
    let doc = Document::new("c", "Cassini", vec![], body, DomainTag::Physics).unwrap();
    let kd = alexandria_core::extraction::extract_document(
        &doc,
        &alexandria_core::extraction::ExtractionConfig::default(),
        &alexandria_core::Gateway::mock(),
    )
    .unwrap();
    let bytes = serialize_ku_document(&kd);
    assert_eq!(parse_ku_document(&bytes).unwrap(), kd);
    assert_eq!(
        serialize_ku_document(&parse_ku_document(&bytes).unwrap()),
        bytes
    );
}
