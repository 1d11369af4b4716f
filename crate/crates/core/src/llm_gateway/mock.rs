//! Deterministic offline provider.
//!
//! The mock reads the `TASK:` line and the `=== NAME ===` sections of the
//! bundled prompt templates and answers with template output derived from
//! the prompt payload. Responses for a few known payloads are canned
//! (`data/mock_canned.jsonl`), and [`MockRule`]s can override responses to
//! inject faults. Output is a pure function of the request.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{CallContext, GenerationRequest, Provider, ProviderError};
use crate::corpus::{normalize_text, split_sentences};
use crate::prompts::{self, sections, task_of};
use crate::provenance::normalize_words;
use crate::seed::{fnv1a64, rng_from, splitmix64};
use crate::vocab::Vocabulary;

pub const MOCK_EMBED_DIM: usize = 4096;

/// Replaces the response for prompts of `task` whose payload contains
/// `needle`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct MockRule {
    pub task: String,
    pub needle: String,
    pub response: String,
}

#[derive(Deserialize)]
struct CannedLine {
    task: String,
    payload: String,
    response: String,
}

pub struct MockProvider {
    rules: Vec<MockRule>,
    canned: HashMap<(String, String), String>,
    embed_dim: usize,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        let mut canned = HashMap::new();
        for line in include_str!("../../data/mock_canned.jsonl").lines() {
            if line.trim().is_empty() {
                continue;
            }
            let c: CannedLine = serde_json::from_str(line).expect("bundled canned response parses");
            canned.insert((c.task, payload_key(&c.payload)), c.response);
        }
        Self {
            rules: Vec::new(),
            canned,
            embed_dim: MOCK_EMBED_DIM,
        }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_rules(mut self, rules: impl IntoIterator<Item = MockRule>) -> Self {
        self.rules.extend(rules);
        self
    }

    pub fn with_embed_dim(mut self, dim: usize) -> Self {
        self.embed_dim = dim.max(1);
        self
    }

    fn respond(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        let prompt = &req.user_prompt;
        let task = task_of(prompt).unwrap_or("");
        let secs = sections(prompt);
        let payload = payload_section(task, &secs);

        for rule in &self.rules {
            if rule.task == task && payload.contains(&rule.needle) {
                return Ok(rule.response.clone());
            }
        }
        if let Some(r) = self.canned.get(&(task.to_string(), payload_key(payload))) {
            return Ok(r.clone());
        }

        let seed = req.seed.unwrap_or(0);
        let out = match task {
            t if t == prompts::EXTRACT.task => {
                mock_extract(payload, secs.get("PREVIOUS KNOWLEDGE UNITS"))
            }
            t if t == prompts::HEADER.task => {
                mock_header(secs.get("DOMAIN").map(String::as_str).unwrap_or(""))
            }
            t if t == prompts::MCQ_GENERATE.task => {
                let count = secs
                    .get("COUNT")
                    .and_then(|c| c.trim().parse().ok())
                    .unwrap_or(3);
                mock_mcqs(payload, count, seed)
            }
            t if t == prompts::MCQ_ANSWER.task => mock_letter(&secs, seed),
            t if t == prompts::RECONSTRUCT.task => mock_reconstruct(payload),
            other => {
                return Err(ProviderError::Malformed(format!(
                    "mock cannot serve task `{other}`"
                )))
            }
        };
        Ok(out)
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn requires_credentials(&self) -> bool {
        false
    }

    fn generate(
        &self,
        req: &GenerationRequest,
        _call: &CallContext<'_>,
    ) -> Result<String, ProviderError> {
        self.respond(req)
    }

    fn embed(
        &self,
        text: &str,
        _model_id: &str,
        _call: &CallContext<'_>,
    ) -> Result<Vec<f64>, ProviderError> {
        Ok(bag_of_words_embedding(text, self.embed_dim))
    }

    fn score_options(
        &self,
        req: &GenerationRequest,
        options: &[String],
        _call: &CallContext<'_>,
    ) -> Option<Result<Vec<f64>, ProviderError>> {
        let secs = sections(&req.user_prompt);
        let context = secs.get("CONTEXT").map(String::as_str).unwrap_or("");
        let question = secs.get("QUESTION").map(String::as_str).unwrap_or("");
        Some(Ok(option_scores(
            context,
            question,
            options,
            req.seed.unwrap_or(0),
        )))
    }
}

fn payload_section<'a>(task: &str, secs: &'a BTreeMap<String, String>) -> &'a str {
    let name = match task {
        t if t == prompts::MCQ_GENERATE.task => "SOURCE",
        t if t == prompts::RECONSTRUCT.task => "KNOWLEDGE UNITS",
        t if t == prompts::MCQ_ANSWER.task || t == prompts::MCQ_CLOZE.task => "QUESTION",
        _ => "TEXT",
    };
    secs.get(name).map(String::as_str).unwrap_or("")
}

fn payload_key(text: &str) -> String {
    normalize_words(text).join(" ")
}

/// Hashed bag-of-words counts. Word order never affects the vector.
pub fn bag_of_words_embedding(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    for w in normalize_words(text) {
        v[(fnv1a64(w.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    v
}

/// Whether the normalized words of `needle` occur contiguously in `haystack`.
pub fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let h = normalize_words(haystack);
    let n = normalize_words(needle);
    !n.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

/// Fraction of each option's words found in the context, plus a small
/// order-independent hash term that breaks ties. An empty context therefore
/// yields a pseudo-random choice.
fn option_scores(context: &str, question: &str, options: &[String], seed: u64) -> Vec<f64> {
    let ctx: HashSet<String> = normalize_words(context).into_iter().collect();
    options
        .iter()
        .map(|opt| {
            let words: BTreeSet<String> = normalize_words(opt).into_iter().collect();
            let present = if words.is_empty() {
                0.0
            } else {
                words.iter().filter(|w| ctx.contains(*w)).count() as f64 / words.len() as f64
            };
            let h =
                splitmix64(fnv1a64(format!("{seed}\u{1f}{question}\u{1f}{opt}").as_bytes()) ^ seed);
            present + (h >> 11) as f64 / (1u64 << 53) as f64 * 1e-3
        })
        .collect()
}

fn mock_letter(secs: &BTreeMap<String, String>, seed: u64) -> String {
    let options: Vec<String> = secs
        .get("OPTIONS")
        .map(String::as_str)
        .unwrap_or("")
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let rest = l.get(1..)?.strip_prefix(')')?;
            Some(rest.trim().to_string())
        })
        .collect();
    if options.is_empty() {
        return "I cannot find any options.".into();
    }
    let context = secs.get("CONTEXT").map(String::as_str).unwrap_or("");
    let question = secs.get("QUESTION").map(String::as_str).unwrap_or("");
    let scores = option_scores(context, question, &options, seed);
    let best = argmax(&scores);
    ((b'A' + best as u8) as char).to_string()
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

const STARTERS: &[&str] = &[
    "a",
    "after",
    "all",
    "also",
    "although",
    "an",
    "and",
    "as",
    "at",
    "based",
    "because",
    "before",
    "both",
    "but",
    "by",
    "each",
    "finally",
    "first",
    "for",
    "from",
    "furthermore",
    "here",
    "however",
    "if",
    "in",
    "it",
    "its",
    "many",
    "moreover",
    "most",
    "no",
    "of",
    "on",
    "one",
    "or",
    "our",
    "second",
    "some",
    "such",
    "that",
    "the",
    "their",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "thus",
    "to",
    "two",
    "using",
    "we",
    "when",
    "where",
    "which",
    "while",
    "with",
    "within",
];

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "by", "for", "from", "in", "into",
    "is", "it", "of", "on", "or", "than", "that", "the", "to", "was", "were", "which", "with",
];

fn core(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

fn ends_clause(token: &str) -> bool {
    token.ends_with([',', '.', ';', ':', ')', '?', '!'])
}

fn is_number(core: &str) -> bool {
    core.chars().any(|c| c.is_ascii_digit())
        && core
            .chars()
            .all(|c| c.is_ascii_digit() || c == ',' || c == '.')
}

/// Capitalized token runs, with leading sentence-starter words dropped.
fn capitalized_runs(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, out: &mut Vec<String>| {
        while run
            .first()
            .is_some_and(|w| STARTERS.contains(&w.to_lowercase().as_str()))
        {
            run.remove(0);
        }
        if !run.is_empty() && run.iter().map(|w| w.len()).sum::<usize>() >= 2 {
            out.push(run.join(" "));
        }
        run.clear();
    };
    for token in sentence.split_whitespace() {
        let c = core(token);
        let capital = c.chars().next().is_some_and(char::is_uppercase);
        if capital && run.len() < 4 {
            run.push(c);
        } else {
            flush(&mut run, &mut out);
            if capital {
                run.push(c);
            }
        }
        if ends_clause(token) {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out
}

/// Numbers with an optional short unit word, e.g. `259000 km`.
fn quantities(sentence: &str) -> Vec<String> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let c = core(t);
        if !is_number(c) {
            continue;
        }
        let mut q = c.to_string();
        if !ends_clause(t) {
            if let Some(next) = tokens.get(i + 1) {
                let u = core(next);
                if is_unit(u) {
                    q.push(' ');
                    q.push_str(u);
                }
            }
        }
        out.push(q);
    }
    out
}

fn is_unit(w: &str) -> bool {
    !w.is_empty()
        && w.len() <= 4
        && w.chars().all(|c| c.is_ascii_alphabetic() || c == '%')
        && !STOPWORDS.contains(&w.to_lowercase().as_str())
}

fn mock_extract(text: &str, previous: Option<&String>) -> String {
    let body = normalize_text(text).unwrap_or_default();
    let sentences = split_sentences(&body);

    let mut names: Vec<String> = Vec::new();
    let mut lowered: HashSet<String> = HashSet::new();
    let mut per_sentence: Vec<Vec<usize>> = Vec::new();
    for s in &sentences {
        let mut here = Vec::new();
        for name in capitalized_runs(&s.text) {
            let key = name.to_lowercase();
            let idx = match names.iter().position(|n| n.to_lowercase() == key) {
                Some(i) => i,
                None if names.len() < 12 && lowered.insert(key) => {
                    names.push(name);
                    names.len() - 1
                }
                None => continue,
            };
            if !here.contains(&idx) {
                here.push(idx);
            }
        }
        per_sentence.push(here);
    }

    if names.is_empty() {
        let longest = body
            .split_whitespace()
            .map(core)
            .filter(|w| w.chars().all(char::is_alphabetic))
            .fold("", |best, w| if w.len() > best.len() { w } else { best });
        let name = if longest.is_empty() {
            "Segment"
        } else {
            longest
        };
        names.push(name.to_string());
        per_sentence = vec![vec![0]; sentences.len()];
    }

    let mut attributes: Vec<Map<String, Value>> = vec![Map::new(); names.len()];
    let mut relations: Vec<Map<String, Value>> = vec![Map::new(); names.len()];
    for (s, here) in sentences.iter().zip(&per_sentence) {
        let Some(&first) = here.first() else { continue };
        let qs = quantities(&s.text);
        if !qs.is_empty() {
            push_values(&mut attributes[first], "mentioned_quantities", qs);
        }
        for &a in here {
            let others: Vec<String> = here
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| names[b].clone())
                .collect();
            if !others.is_empty() {
                push_values(&mut relations[a], "co_mentioned_with", others);
            }
        }
    }

    let mut entities = Map::new();
    for (i, name) in names.iter().enumerate() {
        if attributes[i].is_empty() && relations[i].is_empty() {
            attributes[i].insert("mentioned".into(), json!("yes"));
        }
        entities.insert(
            name.clone(),
            json!({"relations": relations[i], "attributes": attributes[i]}),
        );
    }
    let listed: Vec<&str> = names.iter().take(3).map(String::as_str).collect();
    let mut summary = format!("This segment concerns {}.", listed.join("; "));
    if previous.is_some_and(|p| !p.trim().is_empty()) {
        summary.push_str(" It follows on from the earlier segments.");
    }
    json!({"context_summary": summary, "entities": entities}).to_string()
}

fn push_values(map: &mut Map<String, Value>, key: &str, values: Vec<String>) {
    let slot = map.entry(key.to_string()).or_insert_with(|| json!([]));
    if let Value::Array(items) = slot {
        for v in values {
            if !items.iter().any(|x| x.as_str() == Some(v.as_str())) {
                items.push(Value::String(v));
            }
        }
    }
}

fn mock_header(domain: &str) -> String {
    let field = if domain.trim().is_empty() {
        "General"
    } else {
        domain.trim()
    };
    json!({
        "genre": format!("Academic article, {field}"),
        "style": "Formal and expository. The register is technical and the tone is objective.",
    })
    .to_string()
}

struct KeyCandidate {
    sentence: usize,
    class: u8,
    start: usize,
    len: usize,
}

fn mock_mcqs(source: &str, count: usize, seed: u64) -> String {
    let body = normalize_text(source).unwrap_or_default();
    let sentences = split_sentences(&body);
    let source_words: HashSet<String> = normalize_words(&body).into_iter().collect();
    let mut rng = rng_from(seed);

    let mut candidates: Vec<KeyCandidate> = Vec::new();
    for (si, s) in sentences.iter().enumerate() {
        let tokens: Vec<&str> = s.text.split_whitespace().collect();
        for (j, t) in tokens.iter().enumerate() {
            let c = core(t);
            if is_number(c) {
                let with_unit =
                    !ends_clause(t) && tokens.get(j + 1).is_some_and(|n| is_unit(core(n)));
                candidates.push(KeyCandidate {
                    sentence: si,
                    class: 0,
                    start: j,
                    len: 1 + with_unit as usize,
                });
            } else if j > 0
                && c.len() >= 3
                && c.chars().next().is_some_and(char::is_uppercase)
                && c.chars().all(char::is_alphabetic)
            {
                candidates.push(KeyCandidate {
                    sentence: si,
                    class: 1,
                    start: j,
                    len: 1,
                });
            } else if c.len() >= 8 && c.chars().all(|ch| ch.is_ascii_lowercase()) {
                candidates.push(KeyCandidate {
                    sentence: si,
                    class: 2,
                    start: j,
                    len: 1,
                });
            }
        }
    }
    candidates.shuffle(&mut rng);
    candidates.sort_by_key(|c| c.class);

    // First pass takes one key per sentence, the second fills up.
    let mut chosen: Vec<&KeyCandidate> = Vec::new();
    let mut used_sentences = HashSet::new();
    for c in &candidates {
        if chosen.len() < count && used_sentences.insert(c.sentence) {
            chosen.push(c);
        }
    }
    for c in &candidates {
        if chosen.len() >= count {
            break;
        }
        if !chosen.iter().any(|x| std::ptr::eq(*x, c)) {
            chosen.push(c);
        }
    }

    let vocab = Vocabulary::bundled();
    let mut items = Vec::new();
    for c in chosen {
        let tokens: Vec<&str> = sentences[c.sentence].text.split_whitespace().collect();
        let key_tokens: Vec<&str> = tokens[c.start..c.start + c.len]
            .iter()
            .map(|t| core(t))
            .collect();
        let key = key_tokens.join(" ");
        let mut blanked: Vec<String> = Vec::new();
        for (j, t) in tokens.iter().enumerate() {
            if j == c.start {
                let last = tokens[c.start + c.len - 1];
                let trail = &last[last
                    .trim_end_matches(|ch: char| !ch.is_alphanumeric())
                    .len()..];
                blanked.push(format!("_____{trail}"));
            } else if j > c.start && j < c.start + c.len {
                continue;
            } else {
                blanked.push(t.to_string());
            }
        }
        let question = format!("Which option fills the blank? \"{}\"", blanked.join(" "));
        let question_words: HashSet<String> = normalize_words(&question).into_iter().collect();
        let distractors = if c.class == 0 {
            numeric_distractors(&key_tokens, &body)
        } else {
            word_distractors(&key, vocab, &source_words, &question_words, &mut rng)
        };
        if distractors.len() < 3 {
            continue;
        }
        let correct = rng.gen_range(0..4usize);
        let mut options: Vec<String> = distractors.into_iter().take(3).collect();
        options.insert(correct, key);
        items.push(json!({"question": question, "options": options, "correct_index": correct}));
    }
    Value::Array(items).to_string()
}

fn numeric_distractors(key_tokens: &[&str], source: &str) -> Vec<String> {
    let number = key_tokens[0];
    let unit = key_tokens
        .get(1)
        .map(|u| format!(" {u}"))
        .unwrap_or_default();
    let plain = number.replace(',', "");
    let Ok(v) = plain.parse::<f64>() else {
        return Vec::new();
    };
    let decimals = plain.split_once('.').map(|(_, d)| d.len()).unwrap_or(0);
    let grouped = number.contains(',');
    let mut out: Vec<String> = Vec::new();
    for f in [0.5, 2.0, 1.5, 0.25, 3.0, 0.75, 4.0, 5.0, 10.0] {
        let mut x = v * f;
        if v == 0.0 {
            x = f * 10.0;
        }
        let text = format!("{}{unit}", format_number(x, decimals, grouped));
        if text != format!("{number}{unit}")
            && !out.contains(&text)
            && !contains_phrase(source, &text)
        {
            out.push(text);
        }
        if out.len() == 3 {
            break;
        }
    }
    out
}

fn format_number(x: f64, decimals: usize, grouped: bool) -> String {
    let s = format!("{x:.decimals$}");
    if !grouped {
        return s;
    }
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i.to_string(), format!(".{f}")),
        None => (s.clone(), String::new()),
    };
    let digits: Vec<char> = int.chars().collect();
    let mut g = String::new();
    for (i, ch) in digits.iter().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            g.push(',');
        }
        g.push(*ch);
    }
    g + &frac
}

fn word_distractors(
    key: &str,
    vocab: &Vocabulary,
    source_words: &HashSet<String>,
    question_words: &HashSet<String>,
    rng: &mut impl Rng,
) -> Vec<String> {
    let capital = key.chars().next().is_some_and(char::is_uppercase);
    let min_len = key.len().clamp(4, 7);
    let pool: Vec<&str> = vocab
        .words
        .iter()
        .map(String::as_str)
        .filter(|w| {
            w.len() >= min_len && !source_words.contains(*w) && !question_words.contains(*w)
        })
        .collect();
    let mut out: Vec<String> = Vec::new();
    for w in pool.choose_multiple(rng, 3) {
        let w = if capital {
            let mut cs = w.chars();
            cs.next()
                .map(|f| f.to_uppercase().collect::<String>() + cs.as_str())
                .unwrap_or_default()
        } else {
            w.to_string()
        };
        out.push(w);
    }
    out
}

fn mock_reconstruct(units: &str) -> String {
    let parsed: Value = serde_json::from_str(units).unwrap_or(Value::Null);
    let units = match parsed {
        Value::Array(v) => v,
        other => vec![other],
    };
    let mut sentences = Vec::new();
    for unit in &units {
        let Some(entities) = unit.get("entities").and_then(Value::as_array) else {
            continue;
        };
        for e in entities {
            let name = e.get("name").and_then(Value::as_str).unwrap_or("It");
            if let Some(attrs) = e.get("attributes").and_then(Value::as_object) {
                for (k, v) in attrs {
                    sentences.push(format!(
                        "The {} of {name} is {}.",
                        k.replace('_', " "),
                        joined(v)
                    ));
                }
            }
            if let Some(rels) = e.get("relations").and_then(Value::as_object) {
                for (k, v) in rels {
                    sentences.push(format!("{name} {} {}.", k.replace('_', " "), joined(v)));
                }
            }
        }
    }
    if sentences.is_empty() {
        return "No content was provided.".into();
    }
    sentences.join(" ")
}

fn joined(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(joined).collect::<Vec<_>>().join(" and "),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{parse_ku_fragment, parse_structured_response};

    fn call() -> CallContext<'static> {
        CallContext {
            endpoint: "mock://",
            api_key: None,
            timeout: std::time::Duration::ZERO,
        }
    }

    const TEXT: &str = "The Cassini probe reached Saturn in 2004 after a long cruise. \
        It measured the rings at 282000 km across. Titan has a thick nitrogen atmosphere.";

    fn extract_prompt(text: &str) -> GenerationRequest {
        let p = prompts::EXTRACT.render(&[("chunk", text), ("previous_units", ""), ("header", "")]);
        GenerationRequest::new("mock", prompts::SYSTEM_PROMPT, p)
    }

    #[test]
    fn extraction_finds_capitalized_entities_and_quantities() {
        let m = MockProvider::new();
        let raw = m.generate(&extract_prompt(TEXT), &call()).unwrap();
        assert_eq!(raw, m.generate(&extract_prompt(TEXT), &call()).unwrap());
        let (frag, repairs) = parse_ku_fragment(&raw).unwrap();
        assert_eq!(repairs, 0);
        let names: Vec<&str> = frag.entities.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["Cassini", "Saturn", "Titan"]);
        assert_eq!(
            frag.entities[0].attributes["mentioned_quantities"].values(),
            ["2004"]
        );
    }

    #[test]
    fn generated_mcqs_have_four_distinct_options() {
        let m = MockProvider::new();
        let p = prompts::MCQ_GENERATE.render(&[("count", "3"), ("source", TEXT)]);
        let raw = m
            .generate(&GenerationRequest::new("mock", "", p).with_seed(7), &call())
            .unwrap();
        let v = parse_structured_response(&raw).unwrap().value;
        let items = v.as_array().unwrap();
        assert_eq!(items.len(), 3);
        for it in items {
            let opts: Vec<&str> = it["options"]
                .as_array()
                .unwrap()
                .iter()
                .map(|o| o.as_str().unwrap())
                .collect();
            let distinct: HashSet<&str> = opts.iter().copied().collect();
            assert_eq!(distinct.len(), 4, "{opts:?}");
            let key = opts[it["correct_index"].as_u64().unwrap() as usize];
            assert!(contains_phrase(TEXT, key), "{key}");
            for (i, o) in opts.iter().enumerate() {
                if i as u64 != it["correct_index"].as_u64().unwrap() {
                    assert!(!contains_phrase(TEXT, o), "distractor {o} occurs in source");
                }
            }
        }
    }

    #[test]
    fn scoring_follows_context() {
        let opts: Vec<String> = ["282000 km", "141000 km", "Jupiter", "Titan"]
            .map(String::from)
            .to_vec();
        let s = option_scores(TEXT, "q", &opts, 1);
        assert!(s[0] > 0.99 && s[3] > 0.99);
        assert!(s[1] < 0.6 && s[2] < 0.01);
    }

    #[test]
    fn bag_of_words_ignores_order() {
        assert_eq!(
            bag_of_words_embedding("alpha beta gamma", 64),
            bag_of_words_embedding("gamma alpha beta", 64)
        );
        assert_eq!(bag_of_words_embedding("x", 16).len(), 16);
    }

    #[test]
    fn reconstruction_renders_facts() {
        let units = r#"[{"entities": [{"name": "Titan", "attributes": {"atmosphere": "nitrogen"}, "relations": {"orbits": ["Saturn"]}}]}]"#;
        assert_eq!(
            mock_reconstruct(units),
            "The atmosphere of Titan is nitrogen. Titan orbits Saturn."
        );
    }

    #[test]
    fn number_grouping() {
        assert_eq!(format_number(129500.0, 0, true), "129,500");
        assert_eq!(format_number(2.25, 2, false), "2.25");
    }
}
