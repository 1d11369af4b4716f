//! Document ingestion, text normalization, sentence splitting and chunking.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document `{0}` is empty after normalization")]
    EmptyDocument(String),
    #[error("document id must not be empty")]
    EmptyDocId,
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Coarse research domain of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    Medical,
    Cs,
    Math,
    Physics,
    Other,
}

impl DomainTag {
    pub const ALL: [DomainTag; 5] = [
        DomainTag::Medical,
        DomainTag::Cs,
        DomainTag::Math,
        DomainTag::Physics,
        DomainTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Medical => "medical",
            DomainTag::Cs => "cs",
            DomainTag::Math => "math",
            DomainTag::Physics => "physics",
            DomainTag::Other => "other",
        }
    }

    /// Human-readable column label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            DomainTag::Medical => "Medical",
            DomainTag::Cs => "Computer Science",
            DomainTag::Math => "Mathematics",
            DomainTag::Physics => "Physics",
            DomainTag::Other => "Other",
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainTag {
    type Err = std::convert::Infallible;

    /// Lenient: unknown labels map to [`DomainTag::Other`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace(['_', '-'], " ");
        Ok(match key.as_str() {
            "medical" | "medicine" | "biology" | "bio" | "med" => DomainTag::Medical,
            "cs" | "computer science" | "computing" => DomainTag::Cs,
            "math" | "maths" | "mathematics" => DomainTag::Math,
            "physics" | "phys" => DomainTag::Physics,
            _ => DomainTag::Other,
        })
    }
}

impl Serialize for DomainTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DomainTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or(DomainTag::Other))
    }
}

/// A source document. `body` is always normalized (see [`normalize_text`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub authors: Vec<String>,
    pub body: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
    pub domain: DomainTag,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        authors: Vec<String>,
        raw_body: &str,
        domain: DomainTag,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        if doc_id.trim().is_empty() {
            return Err(CorpusError::EmptyDocId);
        }
        let body =
            normalize_text(raw_body).map_err(|_| CorpusError::EmptyDocument(doc_id.clone()))?;
        Ok(Self {
            doc_id,
            title: title.into(),
            authors,
            body,
            source_uri: None,
            domain,
        })
    }

    pub fn with_source_uri(mut self, uri: impl Into<String>) -> Self {
        self.source_uri = Some(uri.into());
        self
    }

    pub fn sentences(&self) -> Vec<Sentence> {
        split_sentences(&self.body)
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.body)
    }
}

/// One sentence of a normalized body.
///
/// `span` is a byte range into the body. Spans tile the body: each one runs
/// from the sentence start up to the next sentence start, so trailing
/// whitespace and paragraph breaks belong to the preceding sentence. `text`
/// is the span with that whitespace trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    pub span: Range<usize>,
    pub paragraph: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkFlag {
    /// A single sentence longer than the maximum, emitted alone.
    Oversized,
    /// Closed below the minimum because the next sentence would overflow the
    /// maximum.
    Undersized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_index: usize,
    pub sentences: Vec<Sentence>,
    pub token_count: usize,
    pub word_count: usize,
    pub flag: Option<ChunkFlag>,
}

impl Chunk {
    pub fn text(&self) -> String {
        join_sentences(&self.sentences)
    }

    pub fn sentence_indices(&self) -> Range<usize> {
        match (self.sentences.first(), self.sentences.last()) {
            (Some(a), Some(b)) => a.index..b.index + 1,
            _ => 0..0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChunkPolicy {
    /// Greedy paragraph accumulation into `min..=max` approximate tokens.
    TokenRange { min: usize, max: usize },
    /// Greedy sentence accumulation to the word count nearest `words`.
    WordTarget { words: usize },
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy::TokenRange { min: 200, max: 500 }
    }
}

/// Counts tokens for chunk sizing. Swap in an exact tokenizer here.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(words * 4 / 3)`: a provider-independent token estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenCounter;

impl TokenCounter for ApproxTokenCounter {
    fn count(&self, text: &str) -> usize {
        approx_tokens(word_count(text))
    }
}

pub fn approx_tokens(words: usize) -> usize {
    (words * 4).div_ceil(3)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// NFC-normalizes, strips control characters, collapses whitespace runs and
/// keeps line structure only as paragraph breaks (`"\n\n"`).
///
/// A paragraph ends at a blank line or before a line that starts indented.
pub fn normalize_text(raw: &str) -> Result<String, CorpusError> {
    let composed: String = raw.nfc().collect();
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();

    for line in composed.split('\n') {
        let line: String = line
            .chars()
            .filter(|c| !c.is_control() || *c == '\t')
            .collect();
        let indented = line.starts_with(char::is_whitespace);
        let content = collapse_whitespace(&line);
        if content.is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
            continue;
        }
        if indented && !current.is_empty() {
            paragraphs.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(&content);
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }

    if paragraphs.is_empty() {
        return Err(CorpusError::EmptyDocument(String::new()));
    }
    Ok(paragraphs.join("\n\n"))
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub const ABBREVIATIONS_VERSION: &str = "abbrev-v1";

/// The bundled abbreviation stop-list.
pub fn abbreviations() -> &'static [String] {
    static LIST: OnceLock<Vec<String>> = OnceLock::new();
    LIST.get_or_init(|| {
        include_str!("../data/abbreviations.v1.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    abbreviations().iter().any(|abbr| {
        prefix.ends_with(abbr.as_str()) && {
            let head = &prefix[..prefix.len() - abbr.len()];
            head.chars()
                .next_back()
                .is_none_or(|c| c.is_whitespace() || c == '(' || c == '[')
        }
    })
}

const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];

/// Splits a normalized body into sentences.
///
/// A boundary follows `.`, `!` or `?` (plus closing quotes or brackets) when
/// whitespace and an uppercase letter come next, unless the text before the
/// terminator ends with a stop-listed abbreviation. Paragraph breaks always
/// end a sentence.
pub fn split_sentences(body: &str) -> Vec<Sentence> {
    let mut starts: Vec<(usize, usize)> = Vec::new();
    let mut para_start = 0;
    let mut paragraph = 0;
    loop {
        let para_end = body[para_start..]
            .find("\n\n")
            .map_or(body.len(), |i| para_start + i);
        let para = &body[para_start..para_end];
        let first = para_start + (para.len() - para.trim_start().len());
        if first < para_end {
            starts.push((first, paragraph));
            for offset in boundaries_in(para) {
                starts.push((para_start + offset, paragraph));
            }
        }
        if para_end == body.len() {
            break;
        }
        para_start = para_end + 2;
        paragraph += 1;
    }

    let mut out = Vec::with_capacity(starts.len());
    for (i, &(start, paragraph)) in starts.iter().enumerate() {
        // The first sentence also owns any leading whitespace.
        let span_start = if i == 0 { 0 } else { start };
        let span_end = starts.get(i + 1).map_or(body.len(), |s| s.0);
        out.push(Sentence {
            text: body[start..span_end].trim().to_string(),
            index: i,
            span: span_start..span_end,
            paragraph,
        });
    }
    out
}

/// Byte offsets (relative to `para`) where a new sentence starts.
fn boundaries_in(para: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = para.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k > j && k < chars.len() && chars[k].1.is_uppercase() {
                let abbreviation = c == '.' && ends_with_abbreviation(&para[..pos + 1]);
                if !abbreviation {
                    out.push(chars[k].0);
                }
                i = k;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn join_sentences(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s.text);
    }
    out
}

/// Chunks a document with the approximate token counter.
pub fn chunk_document(doc: &Document, policy: ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    chunk_document_with(doc, policy, &ApproxTokenCounter)
}

pub fn chunk_document_with(
    doc: &Document,
    policy: ChunkPolicy,
    counter: &dyn TokenCounter,
) -> Result<Vec<Chunk>, CorpusError> {
    let sentences = doc.sentences();
    if sentences.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }
    Ok(chunk_sentences(&sentences, policy, counter))
}

/// Chunks an already split sentence list. Never splits a sentence; the result
/// partitions `sentences` in order.
pub fn chunk_sentences(
    sentences: &[Sentence],
    policy: ChunkPolicy,
    counter: &dyn TokenCounter,
) -> Vec<Chunk> {
    let mut builder = ChunkBuilder {
        counter,
        out: Vec::new(),
        current: Vec::new(),
    };
    match policy {
        ChunkPolicy::TokenRange { min, max } => {
            let max = max.max(1);
            let mut start = 0;
            while start < sentences.len() {
                let para = sentences[start].paragraph;
                let end = sentences[start..]
                    .iter()
                    .position(|s| s.paragraph != para)
                    .map_or(sentences.len(), |p| start + p);
                builder.push_range_unit(&sentences[start..end], min, max);
                start = end;
            }
        }
        ChunkPolicy::WordTarget { words: target } => {
            for s in sentences {
                let have = builder.current_words();
                let next = have + word_count(&s.text);
                if !builder.current.is_empty()
                    && next > target
                    && next - target > target - have.min(target)
                {
                    builder.emit(None);
                }
                builder.current.push(s.clone());
                if builder.current_words() >= target {
                    builder.emit(None);
                }
            }
        }
    }
    builder.emit(None);
    builder.out
}

struct ChunkBuilder<'a> {
    counter: &'a dyn TokenCounter,
    out: Vec<Chunk>,
    current: Vec<Sentence>,
}

impl ChunkBuilder<'_> {
    fn tokens(&self, extra: &[Sentence]) -> usize {
        let mut all: Vec<Sentence> = self.current.clone();
        all.extend_from_slice(extra);
        self.counter.count(&join_sentences(&all))
    }

    fn current_words(&self) -> usize {
        self.current.iter().map(|s| word_count(&s.text)).sum()
    }

    fn push_range_unit(&mut self, unit: &[Sentence], min: usize, max: usize) {
        if self.tokens(unit) <= max {
            self.current.extend_from_slice(unit);
            if self.tokens(&[]) >= min {
                self.emit(None);
            }
            return;
        }
        if unit.len() > 1 {
            // Paragraph does not fit: fall back to sentence granularity.
            for s in unit {
                self.push_range_unit(std::slice::from_ref(s), min, max);
            }
            return;
        }
        if self.current.is_empty() {
            self.current.extend_from_slice(unit);
            self.emit(Some(ChunkFlag::Oversized));
            return;
        }
        // Current is below `min` (otherwise it would have been emitted) and
        // the next sentence overflows `max`.
        self.emit(Some(ChunkFlag::Undersized));
        self.push_range_unit(unit, min, max);
    }

    fn emit(&mut self, flag: Option<ChunkFlag>) {
        if self.current.is_empty() {
            return;
        }
        let sentences = std::mem::take(&mut self.current);
        let text = join_sentences(&sentences);
        self.out.push(Chunk {
            chunk_index: self.out.len(),
            token_count: self.counter.count(&text),
            word_count: word_count(&text),
            sentences,
            flag,
        });
    }
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    doc_id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    authors: Vec<String>,
    body: String,
    #[serde(default)]
    domain: Option<DomainTag>,
    #[serde(default)]
    source_uri: Option<String>,
}

/// Parses a plain-text document with an optional leading metadata block of
/// `Title:`, `Authors:` and `Domain:` lines.
pub fn parse_text_document(doc_id: &str, contents: &str) -> Result<Document, CorpusError> {
    let mut title = String::new();
    let mut authors = Vec::new();
    let mut domain = DomainTag::Other;
    let mut body_start = 0;
    let mut offset = 0;
    for line in contents.split_inclusive('\n') {
        let trimmed = line.trim();
        let meta = trimmed.split_once(':').and_then(|(k, v)| {
            let key = k.trim().to_ascii_lowercase();
            matches!(key.as_str(), "title" | "authors" | "domain").then(|| (key, v.trim()))
        });
        match meta {
            Some((key, value)) => {
                match key.as_str() {
                    "title" => title = value.to_string(),
                    "authors" => authors = split_authors(value),
                    _ => domain = value.parse().unwrap_or(DomainTag::Other),
                }
                offset += line.len();
                body_start = offset;
            }
            None => break,
        }
    }
    Document::new(doc_id, title, authors, &contents[body_start..], domain)
}

fn split_authors(value: &str) -> Vec<String> {
    let sep = if value.contains(';') { ';' } else { ',' };
    value
        .split(sep)
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses a JSONL corpus: one `{doc_id, title, authors, body, domain}` object
/// per line.
pub fn parse_jsonl_corpus(path: &Path, contents: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let mut doc = Document::new(
            raw.doc_id,
            raw.title,
            raw.authors,
            &raw.body,
            raw.domain.unwrap_or(DomainTag::Other),
        )?;
        doc.source_uri = raw.source_uri;
        docs.push(doc);
    }
    Ok(docs)
}

/// Loads a corpus from a JSONL file, a single text file, or a directory of
/// `.txt`/`.jsonl` files (read in file-name order).
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let docs = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("txt" | "jsonl")
                )
            })
            .collect();
        files.sort();
        let mut docs = Vec::new();
        for file in files {
            docs.extend(load_file(&file)?);
        }
        docs
    } else {
        load_file(path)?
    };
    check_unique(&docs)?;
    Ok(docs)
}

fn load_file(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let contents = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        parse_jsonl_corpus(path, &contents)
    } else {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let doc = parse_text_document(stem, &contents)?;
        Ok(vec![doc.with_source_uri(path.display().to_string())])
    }
}

pub fn check_unique(docs: &[Document]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocId(d.doc_id.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(body: &str) -> Vec<String> {
        split_sentences(body).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn whitespace_collapses() {
        assert_eq!(normalize_text("a  b\t c").unwrap(), "a b c");
        assert_eq!(normalize_text("x").unwrap(), "x");
    }

    #[test]
    fn combining_ring_composes() {
        // U+0041 U+030A composes to U+00C5 in the canonical composition table.
        assert_eq!(normalize_text("\u{0041}\u{030A}").unwrap(), "\u{00C5}");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            normalize_text(" \n\t\u{0007} "),
            Err(CorpusError::EmptyDocument(_))
        ));
    }

    #[test]
    fn paragraphs_from_blank_lines_and_indents() {
        let raw = "First line\ncontinues here.\n\n\nSecond para.\n   Third starts indented.";
        assert_eq!(
            normalize_text(raw).unwrap(),
            "First line continues here.\n\nSecond para.\n\nThird starts indented."
        );
    }

    #[test]
    fn control_characters_are_stripped() {
        assert_eq!(normalize_text("a\u{0000}b\r\nc").unwrap(), "ab c");
    }

    #[test]
    fn basic_sentence_split() {
        assert_eq!(texts("A cat. A dog."), vec!["A cat.", "A dog."]);
        assert_eq!(texts("No terminator here"), vec!["No terminator here"]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert!(abbreviations().iter().any(|a| a == "Dr."));
        assert_eq!(
            texts("Dr. Smith ran. He won."),
            vec!["Dr. Smith ran.", "He won."]
        );
        assert_eq!(
            texts("As shown by Lee et al. The result holds. See Fig. Three."),
            vec![
                "As shown by Lee et al. The result holds.",
                "See Fig. Three."
            ]
        );
    }

    #[test]
    fn lowercase_after_period_does_not_split() {
        assert_eq!(
            texts("Values near 3.5 mm. and more."),
            vec!["Values near 3.5 mm. and more."]
        );
    }

    #[test]
    fn quotes_travel_with_sentence() {
        assert_eq!(
            texts("He said \"stop.\" Then left."),
            vec!["He said \"stop.\"", "Then left."]
        );
    }

    #[test]
    fn spans_tile_body() {
        let body = normalize_text("One. Two!\n\nThree? Four").unwrap();
        let sents = split_sentences(&body);
        assert_eq!(sents.len(), 4);
        assert_eq!(sents[0].span.start, 0);
        assert_eq!(sents.last().unwrap().span.end, body.len());
        for w in sents.windows(2) {
            assert_eq!(w[0].span.end, w[1].span.start);
        }
        assert_eq!(sents[2].paragraph, 1);
    }

    fn paragraph(words: usize, tag: &str) -> String {
        // Ten-word sentences, remainder in a final short sentence.
        let mut out = Vec::new();
        let mut left = words;
        let mut i = 0;
        while left > 0 {
            let n = left.min(10);
            let mut s: Vec<String> = (0..n).map(|j| format!("{tag}{i}w{j}")).collect();
            s[0] = format!("Start{tag}{i}");
            out.push(format!("{}.", s.join(" ")));
            left -= n;
            i += 1;
        }
        out.join(" ")
    }

    #[test]
    fn three_paragraphs_merge_greedily() {
        // 112 words -> ceil(112*4/3) = 150 tokens per paragraph.
        let body = [
            paragraph(112, "a"),
            paragraph(112, "b"),
            paragraph(112, "c"),
        ]
        .join("\n\n");
        let doc = Document::new("d", "", vec![], &body, DomainTag::Other).unwrap();
        let chunks = chunk_document(&doc, ChunkPolicy::default()).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].token_count, 299);
        assert_eq!(
            chunks[0].sentences.iter().map(|s| s.paragraph).max(),
            Some(1)
        );
        assert_eq!(chunks[1].sentences[0].paragraph, 2);
        assert_eq!(chunks[1].token_count, 150);
    }

    #[test]
    fn short_abstract_is_single_chunk() {
        let doc = Document::new("d", "", vec![], &paragraph(135, "x"), DomainTag::Other).unwrap();
        let chunks = chunk_document(&doc, ChunkPolicy::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 180);
        assert_eq!(chunks[0].flag, None);
    }

    #[test]
    fn oversized_sentence_is_flagged_alone() {
        let long: Vec<String> = (0..400).map(|i| format!("w{i}")).collect();
        let body = format!("Short one here. Big {}. Tail sentence.", long.join(" "));
        let doc = Document::new("d", "", vec![], &body, DomainTag::Other).unwrap();
        let chunks = chunk_document(&doc, ChunkPolicy::TokenRange { min: 200, max: 500 }).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[0].flag, Some(ChunkFlag::Undersized));
        assert_eq!(chunks[1].flag, Some(ChunkFlag::Oversized));
        assert!(chunks[1].token_count > 500);
        assert_eq!(chunks[2].flag, None);
    }

    #[test]
    fn word_target_splits_on_sentence_ends() {
        // Oracle: 240 ten-word sentences = 2400 words; the nearest-200 rule
        // closes after every 20th sentence, giving 12 chunks of 200 words.
        let body = paragraph(2400, "p");
        let doc = Document::new("d", "", vec![], &body, DomainTag::Other).unwrap();
        assert_eq!(doc.word_count(), 2400);
        let chunks = chunk_document(&doc, ChunkPolicy::WordTarget { words: 200 }).unwrap();
        assert_eq!(chunks.len(), 12);
        for c in &chunks {
            assert_eq!(c.word_count, 200);
            assert!(c.text().ends_with('.'));
        }
    }

    #[test]
    fn word_target_picks_nearest() {
        // 190 words then a 30-word sentence: 220 is farther from 200 than 190.
        let body = format!("{} Next {}.", paragraph(190, "a"), vec!["w"; 29].join(" "));
        let doc = Document::new("d", "", vec![], &body, DomainTag::Other).unwrap();
        let chunks = chunk_document(&doc, ChunkPolicy::WordTarget { words: 200 }).unwrap();
        assert_eq!(
            chunks.iter().map(|c| c.word_count).collect::<Vec<_>>(),
            vec![190, 30]
        );
    }

    #[test]
    fn metadata_block_is_parsed() {
        let doc = parse_text_document(
            "streinu",
            "Title: Sparsity-certifying Graph Decompositions\nAuthors: Ileana Streinu; Louis Theran\nDomain: math\n\nWe describe a new algorithm.",
        )
        .unwrap();
        assert_eq!(doc.title, "Sparsity-certifying Graph Decompositions");
        assert_eq!(doc.authors, vec!["Ileana Streinu", "Louis Theran"]);
        assert_eq!(doc.domain, DomainTag::Math);
        assert_eq!(doc.body, "We describe a new algorithm.");
    }

    #[test]
    fn jsonl_rejects_duplicates() {
        let jsonl = concat!(
            r#"{"doc_id":"a","title":"T","authors":[],"body":"x y.","domain":"physics"}"#,
            "\n",
            r#"{"doc_id":"a","title":"T","authors":[],"body":"z.","domain":"cs"}"#
        );
        let docs = parse_jsonl_corpus(Path::new("c.jsonl"), jsonl).unwrap();
        assert_eq!(docs[0].domain, DomainTag::Physics);
        assert!(matches!(
            check_unique(&docs),
            Err(CorpusError::DuplicateDocId(_))
        ));
    }
}
