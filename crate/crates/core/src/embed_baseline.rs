//! Embedding-similarity controls.
//!
//! Each original abstract is compared by cosine similarity with itself,
//! a word-scrambled copy, a different abstract from the same domain, a
//! random-word text of equal length, and its own flattened Knowledge Units.
//! With an order-insensitive embedder the scrambled copy is
//! indistinguishable from the original, which is the point of the control.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, DomainTag};
use crate::ku_model::KuLookup;
use crate::llm_gateway::{Gateway, GatewayError};
use crate::mcq_eval::render_rows;
use crate::par::parallel_map;
use crate::seed::{self, derive_seed, item_seed, rng_from};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbedError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine is undefined for an all-zero vector")]
    ZeroVector,
    #[error("scrambling needs at least two words, got {0}")]
    TooShort(usize),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("no Knowledge Units for: {}", .0.join(", "))]
    MissingKus(Vec<String>),
    #[error("the study needs at least two abstracts, got {0}")]
    NotEnoughAbstracts(usize),
    #[error("embedding csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlVariant {
    RandomWords,
    UnrelatedAbstract,
    KuText,
    Scrambled,
    Original,
}

impl ControlVariant {
    /// Report row order: lower bound first, self-similarity last.
    pub const ROWS: [ControlVariant; 5] = [
        ControlVariant::RandomWords,
        ControlVariant::UnrelatedAbstract,
        ControlVariant::KuText,
        ControlVariant::Scrambled,
        ControlVariant::Original,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ControlVariant::RandomWords => "Original-Random Words (Lower Bound)",
            ControlVariant::UnrelatedAbstract => "Original-Unrelated Abstract",
            ControlVariant::KuText => "Original-Knowledge Unit",
            ControlVariant::Scrambled => "Original-Scrambled Word Order",
            ControlVariant::Original => "Original-Original (Upper Bound)",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControlVariant::RandomWords => "RANDOM_WORDS",
            ControlVariant::UnrelatedAbstract => "UNRELATED_ABSTRACT",
            ControlVariant::KuText => "KU_TEXT",
            ControlVariant::Scrambled => "SCRAMBLED",
            ControlVariant::Original => "ORIGINAL",
        }
    }
}

impl fmt::Display for ControlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `dot(u, v) / sqrt(|u|^2 |v|^2)`, clamped to [-1, 1]. Taking a single
/// square root of the product keeps `cosine(v, v)` at exactly 1.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let vv: f64 = v.iter().map(|b| b * b).sum();
    if uu == 0.0 || vv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// Uniformly permutes whitespace-separated words; punctuation stays
/// attached to its word.
pub fn scramble_words(text: &str, seed: u64) -> Result<String, EmbedError> {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    if words.len() < 2 {
        return Err(EmbedError::TooShort(words.len()));
    }
    words.shuffle(&mut rng_from(seed));
    Ok(words.join(" "))
}

/// `length_words` frequency-weighted draws from `vocab`.
pub fn random_words_text(
    length_words: usize,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<String, EmbedError> {
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary);
    }
    let mut rng = rng_from(seed);
    Ok((0..length_words)
        .map(|_| vocab.sample(&mut rng))
        .collect::<Vec<_>>()
        .join(" "))
}

/// Pairs every document with a different one from the same domain using a
/// seeded cyclic permutation (which has no fixed points). Documents alone in
/// their domain are paired with the next document in corpus order.
pub fn unrelated_pairing(docs: &[Document], seed: u64) -> Result<Vec<usize>, EmbedError> {
    if docs.len() < 2 {
        return Err(EmbedError::NotEnoughAbstracts(docs.len()));
    }
    let mut groups: BTreeMap<DomainTag, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        groups.entry(d.domain).or_default().push(i);
    }
    let mut partner = vec![usize::MAX; docs.len()];
    for (domain, idx) in &groups {
        if idx.len() == 1 {
            partner[idx[0]] = (idx[0] + 1) % docs.len();
            continue;
        }
        // Sattolo's algorithm: a uniformly random single cycle.
        let mut rng = rng_from(item_seed(seed, domain.as_str()));
        let mut perm = idx.clone();
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..i);
            perm.swap(i, j);
        }
        for (k, &i) in idx.iter().enumerate() {
            partner[i] = perm[k];
        }
    }
    Ok(partner)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub doc_id: String,
    pub variant: ControlVariant,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: ControlVariant,
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStudy {
    pub model_id: String,
    pub seed: u64,
    pub rows: Vec<SimilarityRow>,
    pub summary: Vec<VariantSummary>,
    /// Documents whose unrelated partner came from another domain.
    pub cross_domain_pairs: Vec<String>,
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

pub fn summarize(rows: &[SimilarityRow]) -> Vec<VariantSummary> {
    ControlVariant::ROWS
        .iter()
        .filter_map(|&v| {
            let mut xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.cosine)
                .collect();
            if xs.is_empty() {
                return None;
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            Some(VariantSummary {
                variant: v,
                label: v.label().to_string(),
                n: xs.len(),
                mean,
                median: median(&mut xs),
            })
        })
        .collect()
}

pub fn run_embedding_study(
    abstracts: &[Document],
    kb: &dyn KuLookup,
    gateway: &Gateway,
    model_id: &str,
    seed: u64,
    jobs: usize,
) -> Result<EmbeddingStudy, EmbedError> {
    let mut kus = Vec::with_capacity(abstracts.len());
    let mut missing = Vec::new();
    for d in abstracts {
        match kb.lookup(&d.doc_id) {
            Some(kd) if !kd.units.is_empty() => kus.push(kd.flat_text()),
            _ => missing.push(d.doc_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(EmbedError::MissingKus(missing));
    }
    let partner = unrelated_pairing(abstracts, derive_seed(seed, "unrelated"))?;
    let cross_domain_pairs = abstracts
        .iter()
        .enumerate()
        .filter(|(i, d)| abstracts[partner[*i]].domain != d.domain)
        .map(|(_, d)| d.doc_id.clone())
        .collect();
    let scramble_stream = derive_seed(seed, seed::SCRAMBLE);
    let random_stream = derive_seed(seed, seed::EMBED);
    let vocab = Vocabulary::bundled();

    let originals = parallel_map(abstracts, jobs, |d| gateway.embed(&d.body, model_id));
    let originals: Vec<Vec<f64>> = originals.into_iter().collect::<Result<_, _>>()?;

    let indices: Vec<usize> = (0..abstracts.len()).collect();
    let per_doc = parallel_map(
        &indices,
        jobs,
        |&i| -> Result<Vec<SimilarityRow>, EmbedError> {
            let d = &abstracts[i];
            let orig = &originals[i];
            let scrambled = scramble_words(&d.body, item_seed(scramble_stream, &d.doc_id))?;
            let random =
                random_words_text(d.word_count(), vocab, item_seed(random_stream, &d.doc_id))?;
            let mut rows = Vec::new();
            let mut push = |variant, v: &[f64]| -> Result<(), EmbedError> {
                rows.push(SimilarityRow {
                    doc_id: d.doc_id.clone(),
                    variant,
                    cosine: cosine(orig, v)?,
                });
                Ok(())
            };
            push(
                ControlVariant::RandomWords,
                &gateway.embed(&random, model_id)?,
            )?;
            push(ControlVariant::UnrelatedAbstract, &originals[partner[i]])?;
            push(ControlVariant::KuText, &gateway.embed(&kus[i], model_id)?)?;
            push(
                ControlVariant::Scrambled,
                &gateway.embed(&scrambled, model_id)?,
            )?;
            push(ControlVariant::Original, orig)?;
            Ok(rows)
        },
    );
    let mut rows = Vec::new();
    for r in per_doc {
        rows.extend(r?);
    }
    Ok(EmbeddingStudy {
        model_id: model_id.to_string(),
        seed,
        summary: summarize(&rows),
        rows,
        cross_domain_pairs,
    })
}

pub fn summary_to_csv(summary: &[VariantSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in summary {
        w.serialize(s).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn summary_from_csv(text: &str) -> Result<Vec<VariantSummary>, EmbedError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<VariantSummary>, _>>()
        .map_err(|e| EmbedError::Csv(e.to_string()))
}

pub fn rows_to_csv(rows: &[SimilarityRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn render_similarity_table(summary: &[VariantSummary]) -> String {
    let mut rows = vec![vec![
        "Texts Compared".to_string(),
        "Cosine Similarity (mean)".into(),
        "Median".into(),
    ]];
    for s in summary {
        rows.push(vec![
            s.label.clone(),
            format!("{:.2}", s.mean),
            format!("{:.2}", s.median),
        ]);
    }
    render_rows(&rows)
}
