//! Knowledge Unit data model, canonical encoding, and validation.
//!
//! A [`KnowledgeUnit`] is the structured record extracted from one chunk:
//! entities with attribute and relation maps, a short context summary, and
//! one provenance hash per source sentence. A [`KuDocument`] groups the
//! units of one source document behind a [`DocumentHeader`].
//!
//! The on-disk form is compact JSON with a fixed key order, one document per
//! line in knowledge-base files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, split_sentences, Chunk, ChunkPolicy};
use crate::provenance::{normalize_words, shingles_of};

pub const KU_SCHEMA_VERSION: &str = "ku-schema-v1";
pub const MAX_CONTEXT_SENTENCES: usize = 5;
pub const MAX_STYLE_WORDS: usize = 60;
pub const DEFAULT_GUARD_N: usize = 7;

/// A schema problem located by a field path such as `units[0].chunk_index`.
#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("schema violation at `{path}`: {message}")]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl SchemaViolation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Attribute value or relation target: one string or a list of strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Text(String),
    List(Vec<String>),
}

impl FieldValue {
    pub fn values(&self) -> Vec<&str> {
        match self {
            FieldValue::Text(s) => vec![s.as_str()],
            FieldValue::List(v) => v.iter().map(String::as_str).collect(),
        }
    }

    fn map_values(&self, f: impl Fn(&str) -> String) -> FieldValue {
        match self {
            FieldValue::Text(s) => FieldValue::Text(f(s)),
            FieldValue::List(v) => FieldValue::List(v.iter().map(|s| f(s)).collect()),
        }
    }
}

impl From<&str> for FieldValue {
    fn from(s: &str) -> Self {
        FieldValue::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, FieldValue>,
    #[serde(default)]
    pub relations: BTreeMap<String, FieldValue>,
}

impl Entity {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: BTreeMap::new(),
            relations: BTreeMap::new(),
        }
    }

    pub fn attribute(mut self, key: &str, value: impl Into<FieldValue>) -> Self {
        self.attributes.insert(normalize_key(key), value.into());
        self
    }

    pub fn relation(mut self, key: &str, target: impl Into<FieldValue>) -> Self {
        self.relations.insert(normalize_key(key), target.into());
        self
    }

    /// Copy with every attribute and relation key in snake_case.
    pub fn normalized(&self) -> Entity {
        Entity {
            name: self.name.trim().to_string(),
            attributes: normalize_keys(&self.attributes),
            relations: normalize_keys(&self.relations),
        }
    }

    /// Applies `f` to the entity name and every relation target.
    pub fn rename_with(&self, f: &impl Fn(&str) -> String) -> Entity {
        Entity {
            name: f(&self.name),
            attributes: self.attributes.clone(),
            relations: self
                .relations
                .iter()
                .map(|(k, v)| (k.clone(), v.map_values(f)))
                .collect(),
        }
    }
}

impl From<Vec<String>> for FieldValue {
    fn from(v: Vec<String>) -> Self {
        FieldValue::List(v)
    }
}

fn normalize_keys(map: &BTreeMap<String, FieldValue>) -> BTreeMap<String, FieldValue> {
    let mut out = BTreeMap::new();
    for (k, v) in map {
        out.insert(normalize_key(k), v.clone());
    }
    out
}

/// Lowercase snake_case: non-alphanumeric runs become one `_`, with no
/// leading or trailing underscore. Idempotent.
pub fn normalize_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    let mut pending = false;
    for c in key.chars() {
        if c.is_alphanumeric() {
            if pending && !out.is_empty() {
                out.push('_');
            }
            pending = false;
            out.extend(c.to_lowercase());
        } else {
            pending = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub ku_id: String,
    pub doc_id: String,
    pub chunk_index: usize,
    pub context_summary: String,
    pub sentence_minhashes: Vec<u32>,
    pub entities: Vec<Entity>,
    pub extractor_model: String,
    pub minhash_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

impl KnowledgeUnit {
    /// Strings checked by the leakage guard: the context summary, attribute
    /// values and relation targets, in canonical order.
    pub fn guarded_strings(&self) -> Vec<&str> {
        let mut out = vec![self.context_summary.as_str()];
        for e in &self.entities {
            for v in e.attributes.values() {
                out.extend(v.values());
            }
            for v in e.relations.values() {
                out.extend(v.values());
            }
        }
        out
    }

    /// Every string-valued field in canonical order: context summary, then
    /// per entity its name, attribute values and relation targets.
    pub fn text_values(&self) -> Vec<&str> {
        let mut out = vec![self.context_summary.as_str()];
        for e in &self.entities {
            out.push(e.name.as_str());
            for v in e.attributes.values() {
                out.extend(v.values());
            }
            for v in e.relations.values() {
                out.extend(v.values());
            }
        }
        out
    }

    pub fn flat_text(&self) -> String {
        self.text_values().join(" ")
    }

    /// Entities as a name-keyed map, the shape models are asked to emit.
    pub fn entities_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for e in &self.entities {
            map.insert(
                e.name.clone(),
                serde_json::json!({ "relations": e.relations, "attributes": e.attributes }),
            );
        }
        serde_json::Value::Object(map)
    }

    /// The model-facing content of the unit: no hashes, ids or metadata.
    pub fn content_value(&self) -> serde_json::Value {
        serde_json::json!({
            "chunk_index": self.chunk_index,
            "context_summary": self.context_summary,
            "entities": self.entities_value(),
        })
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentHeader {
    pub title: String,
    pub authors: Vec<String>,
    pub genre: String,
    pub style_descriptor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkFailure {
    pub chunk_index: usize,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub chunk_index: usize,
    pub dropped_units: usize,
}

/// How a document was extracted; enough to replay the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub extractor_model: String,
    pub seed: u64,
    pub prompt_version: String,
    pub minhash_version: String,
    pub minhash_seed: u64,
    pub chunk_policy: ChunkPolicy,
    pub context_window_kus: usize,
    pub chunk_count: usize,
    #[serde(default)]
    pub failures: Vec<ChunkFailure>,
    #[serde(default)]
    pub truncations: Vec<Truncation>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// All Knowledge Units of one source document.
///
/// Units are ordered by `chunk_index`. Together with `record.failures` they
/// cover `0..record.chunk_count` exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KuDocument {
    pub doc_id: String,
    pub header: DocumentHeader,
    pub units: Vec<KnowledgeUnit>,
    pub record: ExtractionRecord,
}

impl KuDocument {
    /// Checks unit order and chunk coverage.
    pub fn check_structure(&self) -> Result<(), SchemaViolation> {
        let mut covered = BTreeSet::new();
        let mut last: Option<usize> = None;
        for (i, u) in self.units.iter().enumerate() {
            if last.is_some_and(|l| u.chunk_index <= l) {
                return Err(SchemaViolation::new(
                    format!("units[{i}].chunk_index"),
                    "units must be strictly ordered by chunk_index",
                ));
            }
            if u.doc_id != self.doc_id {
                return Err(SchemaViolation::new(
                    format!("units[{i}].doc_id"),
                    "does not match document",
                ));
            }
            last = Some(u.chunk_index);
            covered.insert(u.chunk_index);
        }
        for (i, f) in self.record.failures.iter().enumerate() {
            if !covered.insert(f.chunk_index) {
                return Err(SchemaViolation::new(
                    format!("record.failures[{i}].chunk_index"),
                    "chunk also present as a unit or failure",
                ));
            }
        }
        let expected: BTreeSet<usize> = (0..self.record.chunk_count).collect();
        if covered != expected {
            return Err(SchemaViolation::new(
                "record.chunk_count",
                format!(
                    "units and failures cover {} chunks, expected 0..{}",
                    covered.len(),
                    self.record.chunk_count
                ),
            ));
        }
        Ok(())
    }

    /// Concatenated string values of all units, in chunk order.
    pub fn flat_text(&self) -> String {
        self.units
            .iter()
            .map(KnowledgeUnit::flat_text)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Readable multi-unit rendering: header, then "Knowledge Unit i of N".
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Title: {}\n", self.header.title));
        out.push_str(&format!("Authors: {}\n", self.header.authors.join("; ")));
        out.push_str(&format!("Genre: {}\n", self.header.genre));
        out.push_str(&format!("Style: {}\n", self.header.style_descriptor));
        let total = self.record.chunk_count;
        for u in &self.units {
            out.push_str(&format!(
                "\nKnowledge Unit {} of {}\n",
                u.chunk_index + 1,
                total
            ));
            out.push_str(&format!("Context. {}\n", u.context_summary));
            let body = serde_json::to_string_pretty(&u.entities_value()).unwrap_or_default();
            out.push_str(&body);
            out.push('\n');
        }
        out
    }
}

/// Read access to stored Knowledge Unit documents by `doc_id`.
pub trait KuLookup: Sync {
    fn lookup(&self, doc_id: &str) -> Option<KuDocument>;
}

impl KuLookup for BTreeMap<String, KuDocument> {
    fn lookup(&self, doc_id: &str) -> Option<KuDocument> {
        self.get(doc_id).cloned()
    }
}

impl KuLookup for [KuDocument] {
    fn lookup(&self, doc_id: &str) -> Option<KuDocument> {
        self.iter().find(|d| d.doc_id == doc_id).cloned()
    }
}

impl KuLookup for Vec<KuDocument> {
    fn lookup(&self, doc_id: &str) -> Option<KuDocument> {
        self.as_slice().lookup(doc_id)
    }
}

/// Canonical single-line JSON.
pub fn serialize_ku_document(kd: &KuDocument) -> Vec<u8> {
    serde_json::to_vec(kd).expect("KuDocument serialization is infallible")
}

pub fn parse_ku_document(bytes: &[u8]) -> Result<KuDocument, SchemaViolation> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let kd: KuDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let path = match missing_field(&message) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        SchemaViolation::new(path, message)
    })?;
    kd.check_structure()?;
    Ok(kd)
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Options for [`validate_ku`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// n-gram size for the leakage guard. Values below 3 are raised to 3.
    pub guard_n: usize,
    /// Treat leakage findings as errors.
    pub strict: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            guard_n: DEFAULT_GUARD_N,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceMismatch {
    pub expected_sentences: usize,
    pub found_hashes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub guard_n: usize,
    pub strict: bool,
    pub schema: Vec<SchemaViolation>,
    /// Distinct normalized n-grams shared by the source chunk and the KU.
    pub leakage: Vec<String>,
    pub provenance: Option<ProvenanceMismatch>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.schema.is_empty() && self.leakage.is_empty() && self.provenance.is_none()
    }

    pub fn has_errors(&self) -> bool {
        !self.schema.is_empty()
            || self.provenance.is_some()
            || (self.strict && !self.leakage.is_empty())
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for v in &self.schema {
            parts.push(v.to_string());
        }
        if let Some(p) = &self.provenance {
            parts.push(format!(
                "provenance mismatch: {} hashes for {} sentences",
                p.found_hashes, p.expected_sentences
            ));
        }
        if !self.leakage.is_empty() {
            parts.push(format!(
                "{} shared {}-gram(s), e.g. \"{}\"",
                self.leakage.len(),
                self.guard_n,
                self.leakage[0]
            ));
        }
        parts.join("; ")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

/// Distinct normalized `n`-grams shared by `source` and `candidate`, sorted.
pub fn shared_ngrams(source: &str, candidate: &str, n: usize) -> Vec<String> {
    let a = shingles_of(&normalize_words(source), n);
    let b = shingles_of(&normalize_words(candidate), n);
    let mut out: Vec<String> = a.intersection(&b).map(|s| s.to_string()).collect();
    out.sort();
    out
}

/// Checks a unit against its source chunk: schema, verbatim leakage, and
/// provenance hash count. Always returns a report.
pub fn validate_ku(
    ku: &KnowledgeUnit,
    source_chunk: &Chunk,
    opts: ValidationOptions,
) -> ValidationReport {
    let guard_n = opts.guard_n.max(3);
    let mut schema = Vec::new();

    if ku.entities.is_empty() {
        schema.push(SchemaViolation::new(
            "entities",
            "at least one entity is required",
        ));
    }
    let summary_sentences = normalize_text(&ku.context_summary)
        .map(|t| split_sentences(&t).len())
        .unwrap_or(0);
    if summary_sentences > MAX_CONTEXT_SENTENCES {
        schema.push(SchemaViolation::new(
            "context_summary",
            format!("{summary_sentences} sentences exceeds the cap of {MAX_CONTEXT_SENTENCES}"),
        ));
    }
    if ku.chunk_index != source_chunk.chunk_index {
        schema.push(SchemaViolation::new(
            "chunk_index",
            format!(
                "unit is for chunk {}, source is chunk {}",
                ku.chunk_index, source_chunk.chunk_index
            ),
        ));
    }

    let names: BTreeSet<&str> = ku.entities.iter().map(|e| e.name.as_str()).collect();
    let lowered: BTreeMap<String, &str> = names.iter().map(|n| (n.to_lowercase(), *n)).collect();
    for (i, e) in ku.entities.iter().enumerate() {
        if e.name.trim().is_empty() {
            schema.push(SchemaViolation::new(
                format!("entities[{i}].name"),
                "empty entity name",
            ));
        }
        for (kind, map) in [("attributes", &e.attributes), ("relations", &e.relations)] {
            for (k, v) in map {
                if k.is_empty() || normalize_key(k) != *k {
                    schema.push(SchemaViolation::new(
                        format!("entities[{i}].{kind}.{k}"),
                        "keys must be non-empty snake_case",
                    ));
                }
                if kind == "relations" {
                    for target in v.values() {
                        if names.contains(target) {
                            continue;
                        }
                        if let Some(canonical) = lowered.get(&target.to_lowercase()) {
                            schema.push(SchemaViolation::new(
                                format!("entities[{i}].relations.{k}"),
                                format!("target `{target}` does not resolve; entity is named `{canonical}`"),
                            ));
                        }
                    }
                }
            }
        }
    }

    let expected = source_chunk.sentences.len();
    let provenance = (ku.sentence_minhashes.len() != expected).then_some(ProvenanceMismatch {
        expected_sentences: expected,
        found_hashes: ku.sentence_minhashes.len(),
    });

    let leakage = shared_ngrams(
        &source_chunk.text(),
        &ku.guarded_strings().join(" "),
        guard_n,
    );

    ValidationReport {
        guard_n,
        strict: opts.strict,
        schema,
        leakage,
        provenance,
    }
}
