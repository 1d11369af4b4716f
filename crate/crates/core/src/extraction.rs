//! Chunk-by-chunk Knowledge Unit extraction.
//!
//! Each chunk is sent to the model together with a one-shot exemplar, the
//! document header and the most recent units of the same document (the
//! context window), which keeps entity naming stable across chunks. Names
//! are additionally canonicalized locally: a name that matches an earlier
//! one case-insensitively is rewritten to the first-seen form.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    chunk_document, ApproxTokenCounter, Chunk, ChunkPolicy, CorpusError, Document, TokenCounter,
};
use crate::ku_model::{
    validate_ku, ChunkFailure, DocumentHeader, Entity, ExtractionRecord, KnowledgeUnit, KuDocument,
    Truncation, ValidationOptions, DEFAULT_GUARD_N, MAX_STYLE_WORDS,
};
use crate::llm_gateway::{
    parse_ku_fragment, parse_structured_response, Gateway, GatewayError, GenerationRequest,
};
use crate::par::parallel_map;
use crate::prompts::{self, exemplar};
use crate::provenance::{sentence_minhash, DEFAULT_MINHASH_SEED, MINHASH_VERSION};
use crate::seed::{self, derive_seed, item_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub context_window_kus: usize,
    pub chunk_policy: ChunkPolicy,
    pub guard_n: usize,
    pub strict_leakage: bool,
    pub extractor_model: String,
    pub seed: u64,
    /// Prompt size limit in approximate tokens.
    pub prompt_budget_tokens: usize,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Extra attempts per chunk when the response cannot be parsed.
    pub parse_retries: usize,
    /// Timestamp written into every unit; `None` keeps output byte-stable.
    pub created_at: Option<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            context_window_kus: 10,
            chunk_policy: ChunkPolicy::default(),
            guard_n: DEFAULT_GUARD_N,
            strict_leakage: false,
            extractor_model: "mock".into(),
            seed: 42,
            prompt_budget_tokens: 32_000,
            max_output_tokens: 4096,
            temperature: 0.0,
            parse_retries: 1,
            created_at: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("prompt for chunk {chunk_index} needs {tokens} tokens without any previous units; budget is {budget}")]
    PromptTooLarge {
        chunk_index: usize,
        tokens: usize,
        budget: usize,
    },
    #[error("extraction of `{doc_id}` failed: {failed} of {total} chunks could not be extracted")]
    ExtractionFailed {
        doc_id: String,
        failed: usize,
        total: usize,
        failures: Vec<ChunkFailure>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// An extraction prompt and the number of window units dropped to fit it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionPrompt {
    pub request: GenerationRequest,
    pub dropped_units: usize,
    /// Chunk indices of the units included, oldest first.
    pub included_chunks: Vec<usize>,
}

pub fn render_header(h: &DocumentHeader) -> String {
    format!(
        "Title: {}\nAuthors: {}\nGenre: {}\nStyle: {}",
        h.title,
        h.authors.join("; "),
        h.genre,
        h.style_descriptor
    )
}

fn render_units(units: &[&KnowledgeUnit]) -> String {
    units
        .iter()
        .map(|u| u.content_value().to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds the extraction request for `chunk`. `prev_kus` should hold the
/// most recent units in order; when the prompt exceeds the budget the oldest
/// are dropped first.
pub fn build_extraction_prompt(
    chunk: &Chunk,
    prev_kus: &[KnowledgeUnit],
    header: &DocumentHeader,
    doc: &Document,
    cfg: &ExtractionConfig,
) -> Result<ExtractionPrompt, ExtractionError> {
    let ex = exemplar(doc.domain);
    let example_output = serde_json::to_string_pretty(&ex.output).expect("exemplar serializes");
    let header_text = render_header(header);
    let chunk_text = chunk.text();
    let start = prev_kus.len().saturating_sub(cfg.context_window_kus);
    let window: Vec<&KnowledgeUnit> = prev_kus[start..].iter().collect();

    let counter = ApproxTokenCounter;
    let mut last_tokens = 0;
    for dropped in 0..=window.len() {
        let kept = &window[dropped..];
        let previous = render_units(kept);
        let text = prompts::EXTRACT.render(&[
            ("example_text", ex.text.as_str()),
            ("example_output", example_output.as_str()),
            ("header", header_text.as_str()),
            ("previous_units", previous.as_str()),
            ("chunk", chunk_text.as_str()),
        ]);
        last_tokens = counter.count(prompts::SYSTEM_PROMPT) + counter.count(&text);
        if last_tokens <= cfg.prompt_budget_tokens {
            let mut request =
                GenerationRequest::new(cfg.extractor_model.clone(), prompts::SYSTEM_PROMPT, text);
            request.max_output_tokens = cfg.max_output_tokens;
            request.temperature = cfg.temperature;
            return Ok(ExtractionPrompt {
                request,
                dropped_units: dropped,
                included_chunks: kept.iter().map(|u| u.chunk_index).collect(),
            });
        }
    }
    Err(ExtractionError::PromptTooLarge {
        chunk_index: chunk.chunk_index,
        tokens: last_tokens,
        budget: cfg.prompt_budget_tokens,
    })
}

#[derive(Deserialize)]
struct HeaderReply {
    genre: String,
    style: String,
}

/// Asks the model for genre and style from the first chunk and metadata.
/// Falls back to a domain-derived genre when the reply is unusable.
pub fn generate_header(
    doc: &Document,
    first_chunk: &Chunk,
    cfg: &ExtractionConfig,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<DocumentHeader, GatewayError> {
    let prompt = prompts::HEADER.render(&[
        ("title", doc.title.as_str()),
        ("domain", doc.domain.label()),
        ("text", first_chunk.text().as_str()),
    ]);
    let mut req =
        GenerationRequest::new(cfg.extractor_model.clone(), prompts::SYSTEM_PROMPT, prompt)
            .with_seed(item_seed(
                derive_seed(cfg.seed, seed::EXTRACTION),
                &format!("{}#header", doc.doc_id),
            ));
    req.temperature = cfg.temperature;
    let raw = gateway.generate(&req)?;
    let reply = parse_structured_response(&raw)
        .ok()
        .and_then(|p| serde_json::from_value::<HeaderReply>(p.value).ok());
    let (genre, style) = match reply {
        Some(r) => (r.genre, r.style),
        None => {
            warnings.push("header: unusable model reply, genre derived from domain".into());
            (
                format!("Academic article, {}", doc.domain.label()),
                String::new(),
            )
        }
    };
    let words: Vec<&str> = style.split_whitespace().collect();
    let style = if words.len() > MAX_STYLE_WORDS {
        warnings.push(format!(
            "header: style descriptor truncated to {MAX_STYLE_WORDS} words"
        ));
        words[..MAX_STYLE_WORDS].join(" ")
    } else {
        style
    };
    Ok(DocumentHeader {
        title: doc.title.clone(),
        authors: doc.authors.clone(),
        genre,
        style_descriptor: style,
    })
}

/// Document-scoped map from lowercase entity name to first-seen form.
#[derive(Debug, Default)]
struct NameRegistry {
    canonical: HashMap<String, String>,
}

impl NameRegistry {
    fn resolve(&self, name: &str) -> String {
        self.canonical
            .get(&name.trim().to_lowercase())
            .cloned()
            .unwrap_or_else(|| name.trim().to_string())
    }

    /// Renames entities and relation targets, merges entities that collapse
    /// to one name, then registers the new names.
    fn canonicalize(&mut self, entities: Vec<Entity>) -> Vec<Entity> {
        let mut fresh: HashMap<String, String> = HashMap::new();
        for e in &entities {
            let key = e.name.trim().to_lowercase();
            if !self.canonical.contains_key(&key) {
                fresh
                    .entry(key)
                    .or_insert_with(|| e.name.trim().to_string());
            }
        }
        self.canonical.extend(fresh);
        let mut out: Vec<Entity> = Vec::new();
        for e in entities {
            let renamed = e.rename_with(&|n: &str| self.resolve(n));
            match out.iter_mut().find(|x| x.name == renamed.name) {
                Some(existing) => {
                    for (k, v) in renamed.attributes {
                        existing.attributes.entry(k).or_insert(v);
                    }
                    for (k, v) in renamed.relations {
                        existing.relations.entry(k).or_insert(v);
                    }
                }
                None => out.push(renamed),
            }
        }
        out
    }
}

/// Extracts one unit per chunk. Chunks whose responses cannot be parsed are
/// recorded as failures; the document fails when half or more do.
pub fn extract_document(
    doc: &Document,
    cfg: &ExtractionConfig,
    gateway: &Gateway,
) -> Result<KuDocument, ExtractionError> {
    let chunks = chunk_document(doc, cfg.chunk_policy)?;
    let mut warnings = Vec::new();
    let header = generate_header(doc, &chunks[0], cfg, gateway, &mut warnings)?;
    let stream = derive_seed(cfg.seed, seed::EXTRACTION);
    let opts = ValidationOptions {
        guard_n: cfg.guard_n,
        strict: cfg.strict_leakage,
    };

    let mut names = NameRegistry::default();
    let mut units: Vec<KnowledgeUnit> = Vec::new();
    let mut failures = Vec::new();
    let mut truncations = Vec::new();

    for chunk in &chunks {
        let prompt = build_extraction_prompt(chunk, &units, &header, doc, cfg)?;
        if prompt.dropped_units > 0 {
            truncations.push(Truncation {
                chunk_index: chunk.chunk_index,
                dropped_units: prompt.dropped_units,
            });
        }
        let chunk_seed = item_seed(stream, &format!("{}#{}", doc.doc_id, chunk.chunk_index));

        let mut outcome = Err((String::new(), None));
        for attempt in 0..=cfg.parse_retries {
            let req = prompt
                .request
                .clone()
                .with_seed(chunk_seed.wrapping_add(attempt as u64));
            let raw = match gateway.generate(&req) {
                Ok(raw) => raw,
                Err(
                    e @ (GatewayError::AuthError { .. }
                    | GatewayError::AuthRejected(_)
                    | GatewayError::InvalidRequest(_)),
                ) => return Err(e.into()),
                Err(e) => {
                    outcome = Err((e.to_string(), None));
                    continue;
                }
            };
            match parse_ku_fragment(&raw) {
                Ok((fragment, repairs)) => {
                    if repairs > 0 {
                        warnings.push(format!(
                            "chunk {}: response needed {repairs} repair pass(es)",
                            chunk.chunk_index
                        ));
                    }
                    outcome = Ok(fragment);
                    break;
                }
                Err(e) => outcome = Err((e.reason, Some(e.raw))),
            }
        }

        let fragment = match outcome {
            Ok(f) => f,
            Err((reason, raw_response)) => {
                failures.push(ChunkFailure {
                    chunk_index: chunk.chunk_index,
                    reason,
                    raw_response,
                });
                continue;
            }
        };

        let mut minhashes = Vec::with_capacity(chunk.sentences.len());
        for s in &chunk.sentences {
            match sentence_minhash(s, DEFAULT_MINHASH_SEED) {
                Ok(h) => minhashes.push(h.value),
                Err(e) => {
                    warnings.push(format!("chunk {}: {e}", chunk.chunk_index));
                    minhashes.push(0);
                }
            }
        }
        let ku = KnowledgeUnit {
            ku_id: format!("{}#{}", doc.doc_id, chunk.chunk_index),
            doc_id: doc.doc_id.clone(),
            chunk_index: chunk.chunk_index,
            context_summary: fragment.context_summary.trim().to_string(),
            sentence_minhashes: minhashes,
            entities: names.canonicalize(fragment.entities),
            extractor_model: cfg.extractor_model.clone(),
            minhash_version: MINHASH_VERSION.to_string(),
            created_at: cfg.created_at.clone(),
        };

        let report = validate_ku(&ku, chunk, opts);
        if cfg.strict_leakage && !report.leakage.is_empty() {
            failures.push(ChunkFailure {
                chunk_index: chunk.chunk_index,
                reason: format!(
                    "leakage: {} shared {}-grams",
                    report.leakage.len(),
                    report.guard_n
                ),
                raw_response: None,
            });
            continue;
        }
        if !report.is_clean() {
            warnings.push(format!("chunk {}: {}", chunk.chunk_index, report.summary()));
        }
        units.push(ku);
    }

    let total = chunks.len();
    if failures.len() * 2 >= total && !failures.is_empty() {
        return Err(ExtractionError::ExtractionFailed {
            doc_id: doc.doc_id.clone(),
            failed: failures.len(),
            total,
            failures,
        });
    }

    Ok(KuDocument {
        doc_id: doc.doc_id.clone(),
        header,
        units,
        record: ExtractionRecord {
            extractor_model: cfg.extractor_model.clone(),
            seed: cfg.seed,
            prompt_version: format!("{};{}", prompts::EXTRACT.version, prompts::HEADER.version),
            minhash_version: MINHASH_VERSION.to_string(),
            minhash_seed: DEFAULT_MINHASH_SEED,
            chunk_policy: cfg.chunk_policy,
            context_window_kus: cfg.context_window_kus,
            chunk_count: total,
            failures,
            truncations,
            warnings,
        },
    })
}

/// Extracts many documents with up to `jobs` worker threads. Results keep
/// the input order.
pub fn extract_corpus(
    docs: &[Document],
    cfg: &ExtractionConfig,
    gateway: &Gateway,
    jobs: usize,
) -> Vec<Result<KuDocument, ExtractionError>> {
    parallel_map(docs, jobs, |d| extract_document(d, cfg, gateway))
}
