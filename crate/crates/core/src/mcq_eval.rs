//! Multiple-choice retention evaluation.
//!
//! Questions are generated from the source text, then answered under three
//! conditions: no context (lower bound), the original text (upper bound),
//! and the document's Knowledge Units only. Accuracy is kept as exact
//! counts; rates are derived from them.
//!
//! Answering prefers cloze scoring (one score per option, argmax, ties to
//! the lowest index). Providers without option scoring are asked for a
//! single letter instead, with one reprompt when the reply cannot be read.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, DomainTag};
use crate::ku_model::{KnowledgeUnit, KuLookup};
use crate::llm_gateway::{parse_structured_response, Gateway, GatewayError, GenerationRequest};
use crate::par::parallel_map;
use crate::prompts;
use crate::seed::{self, derive_seed, item_seed, rng_from};

pub const OPTIONS_PER_QUESTION: usize = 4;
/// Regeneration rounds after the first request when items fail validation.
pub const MAX_REGENERATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcq {
    pub question: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    pub doc_id: String,
    #[serde(default)]
    pub generator_model: String,
    #[serde(default)]
    pub question_set_id: String,
}

impl Mcq {
    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.options.len() != OPTIONS_PER_QUESTION {
            return Err(format!(
                "expected {OPTIONS_PER_QUESTION} options, got {}",
                self.options.len()
            ));
        }
        let distinct: BTreeSet<String> = self
            .options
            .iter()
            .map(|o| o.trim().to_lowercase())
            .collect();
        if distinct.len() != self.options.len() || self.options.iter().any(|o| o.trim().is_empty())
        {
            return Err("options must be non-empty and pairwise distinct".into());
        }
        if self.correct_index >= self.options.len() {
            return Err(format!("correct_index {} out of range", self.correct_index));
        }
        Ok(())
    }

    /// Copy with options permuted by `seed`; the key follows its option.
    pub fn shuffled(&self, seed: u64) -> Mcq {
        let mut order: Vec<usize> = (0..self.options.len()).collect();
        order.shuffle(&mut rng_from(seed));
        let mut out = self.clone();
        out.options = order.iter().map(|&i| self.options[i].clone()).collect();
        out.correct_index = order
            .iter()
            .position(|&i| i == self.correct_index)
            .expect("key is in the permutation");
        out
    }
}

/// Reads the `{question, options, correct_index, doc_id}` JSONL format.
pub fn parse_mcq_jsonl(text: &str) -> Result<Vec<Mcq>, McqError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Mcq = serde_json::from_str(line)
            .map_err(|e| McqError::InvalidMcq(format!("line {}: {e}", n + 1)))?;
        q.validate()
            .map_err(|e| McqError::InvalidMcq(format!("line {}: {e}", n + 1)))?;
        out.push(q);
    }
    Ok(out)
}

pub fn to_mcq_jsonl(questions: &[Mcq]) -> String {
    let mut s = String::new();
    for q in questions {
        s.push_str(&serde_json::to_string(q).expect("Mcq serializes"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvalCondition {
    NoContext,
    OriginalText,
    KnowledgeUnits,
}

impl EvalCondition {
    pub const ALL: [EvalCondition; 3] = [
        EvalCondition::NoContext,
        EvalCondition::OriginalText,
        EvalCondition::KnowledgeUnits,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalCondition::NoContext => "NO_CONTEXT",
            EvalCondition::OriginalText => "ORIGINAL_TEXT",
            EvalCondition::KnowledgeUnits => "KNOWLEDGE_UNITS",
        }
    }
}

impl fmt::Display for EvalCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvalCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "NO_CONTEXT" | "NONE" => Ok(EvalCondition::NoContext),
            "ORIGINAL_TEXT" | "ORIGINAL" | "TEXT" => Ok(EvalCondition::OriginalText),
            "KNOWLEDGE_UNITS" | "KU" | "KUS" => Ok(EvalCondition::KnowledgeUnits),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum McqError {
    #[error("question count must be at least 1")]
    InvalidCount,
    #[error("only {got} of {wanted} questions for `{doc_id}` survived validation")]
    TooFewQuestions {
        doc_id: String,
        wanted: usize,
        got: usize,
    },
    #[error("no Knowledge Units for: {}", .0.join(", "))]
    MissingKus(Vec<String>),
    #[error("invalid question: {0}")]
    InvalidMcq(String),
    #[error("context must be empty exactly for NO_CONTEXT (condition {0})")]
    ContextMismatch(EvalCondition),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Questions that survived validation plus notes on rejected items.
#[derive(Debug, Clone, PartialEq)]
pub struct McqGeneration {
    pub questions: Vec<Mcq>,
    pub rejected: Vec<String>,
}

/// Identifies a question set and the model that writes it.
#[derive(Debug, Clone)]
pub struct GenerationSpec<'a> {
    pub doc_id: &'a str,
    pub question_set_id: &'a str,
    pub generator_model: &'a str,
    pub seed: u64,
}

fn draft_from(v: &serde_json::Value, spec: &GenerationSpec<'_>) -> Result<Mcq, String> {
    let question = v
        .get("question")
        .and_then(|q| q.as_str())
        .ok_or("missing question")?;
    let options = v
        .get("options")
        .and_then(|o| o.as_array())
        .ok_or("missing options")?
        .iter()
        .map(|o| o.as_str().map(str::to_string).ok_or("non-string option"))
        .collect::<Result<Vec<_>, _>>()?;
    let correct_index = v
        .get("correct_index")
        .and_then(|c| c.as_u64())
        .ok_or("missing correct_index")? as usize;
    let q = Mcq {
        question: question.trim().to_string(),
        options: options.iter().map(|o| o.trim().to_string()).collect(),
        correct_index,
        doc_id: spec.doc_id.to_string(),
        generator_model: spec.generator_model.to_string(),
        question_set_id: spec.question_set_id.to_string(),
    };
    q.validate()?;
    Ok(q)
}

/// Generates `count` validated questions; malformed items trigger up to
/// [`MAX_REGENERATIONS`] further requests for the missing number.
pub fn generate_mcqs(
    source: &str,
    count: usize,
    spec: &GenerationSpec<'_>,
    gateway: &Gateway,
) -> Result<McqGeneration, McqError> {
    if count == 0 {
        return Err(McqError::InvalidCount);
    }
    let mut questions: Vec<Mcq> = Vec::new();
    let mut rejected = Vec::new();
    for round in 0..=MAX_REGENERATIONS {
        let needed = count - questions.len();
        let prompt =
            prompts::MCQ_GENERATE.render(&[("count", &needed.to_string()), ("source", source)]);
        let req = GenerationRequest::new(spec.generator_model, prompts::SYSTEM_PROMPT, prompt)
            .with_seed(spec.seed.wrapping_add(round as u64));
        let raw = gateway.generate(&req)?;
        match parse_structured_response(&raw) {
            Ok(p) => {
                let items = match p.value {
                    serde_json::Value::Array(items) => items,
                    other => vec![other],
                };
                for (i, item) in items.iter().enumerate() {
                    match draft_from(item, spec) {
                        Ok(q) if questions.iter().any(|x| x.question == q.question) => {
                            rejected.push(format!("round {round} item {i}: duplicate question"));
                        }
                        Ok(q) if questions.len() < count => questions.push(q),
                        Ok(_) => {}
                        Err(e) => rejected.push(format!("round {round} item {i}: {e}")),
                    }
                }
            }
            Err(e) => rejected.push(format!("round {round}: {}", e.reason)),
        }
        if questions.len() == count {
            return Ok(McqGeneration {
                questions,
                rejected,
            });
        }
    }
    Err(McqError::TooFewQuestions {
        doc_id: spec.doc_id.to_string(),
        wanted: count,
        got: questions.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    Cloze,
    Letter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    /// `None` when no readable answer was obtained.
    pub chosen: Option<usize>,
    pub mode: AnswerMode,
    pub reprompted: bool,
}

/// Index of the maximum score; the lowest index wins ties. Non-finite
/// scores never win.
pub fn cloze_argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Strict letter extraction: the trimmed reply must be exactly one of A-D.
pub fn parse_letter(reply: &str) -> Option<usize> {
    match reply.trim() {
        "A" => Some(0),
        "B" => Some(1),
        "C" => Some(2),
        "D" => Some(3),
        _ => None,
    }
}

fn render_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}) {o}", (b'A' + i as u8) as char))
        .collect::<Vec<_>>()
        .join("\n")
}

const LETTER_INSTRUCTION: &str = "Reply with exactly one letter: A, B, C or D.";
const REPROMPT_INSTRUCTION: &str =
    "Your previous reply could not be read. Reply with exactly one letter (A, B, C or D) and nothing else.";

pub fn answer_mcq(
    mcq: &Mcq,
    condition: EvalCondition,
    context_text: &str,
    model_id: &str,
    seed: u64,
    gateway: &Gateway,
) -> Result<AnswerOutcome, McqError> {
    if context_text.trim().is_empty() != (condition == EvalCondition::NoContext) {
        return Err(McqError::ContextMismatch(condition));
    }
    let cloze =
        prompts::MCQ_CLOZE.render(&[("context", context_text), ("question", &mcq.question)]);
    let req = GenerationRequest::new(model_id, prompts::SYSTEM_PROMPT, cloze).with_seed(seed);
    if let Some(scores) = gateway.score_options(&req, &mcq.options)? {
        let chosen = if scores.len() == mcq.options.len() {
            cloze_argmax(&scores)
        } else {
            None
        };
        return Ok(AnswerOutcome {
            chosen,
            mode: AnswerMode::Cloze,
            reprompted: false,
        });
    }

    let options = render_options(&mcq.options);
    let mut reprompted = false;
    for instruction in [LETTER_INSTRUCTION, REPROMPT_INSTRUCTION] {
        let prompt = prompts::MCQ_ANSWER.render(&[
            ("instruction", instruction),
            ("context", context_text),
            ("question", &mcq.question),
            ("options", &options),
        ]);
        let mut req =
            GenerationRequest::new(model_id, prompts::SYSTEM_PROMPT, prompt).with_seed(seed);
        req.max_output_tokens = 8;
        let reply = gateway.generate(&req)?;
        if let Some(i) = parse_letter(&reply) {
            return Ok(AnswerOutcome {
                chosen: Some(i),
                mode: AnswerMode::Letter,
                reprompted,
            });
        }
        reprompted = true;
    }
    Ok(AnswerOutcome {
        chosen: None,
        mode: AnswerMode::Letter,
        reprompted,
    })
}

/// All units of a document in chunk order, as pretty JSON.
pub fn ku_context(units: &[KnowledgeUnit]) -> String {
    let values: Vec<serde_json::Value> = units.iter().map(KnowledgeUnit::content_value).collect();
    serde_json::to_string_pretty(&values).expect("unit content serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    /// Independently generated question sets per document.
    pub question_sets: usize,
    pub mcqs_per_abstract: usize,
    pub mcqs_per_paper: usize,
    /// Documents with at most this many words count as abstracts.
    pub abstract_max_words: usize,
    pub generator_model: String,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            question_sets: 3,
            mcqs_per_abstract: 3,
            mcqs_per_paper: 10,
            abstract_max_words: 400,
            generator_model: "mock".into(),
            jobs: 1,
        }
    }
}

impl EvalConfig {
    pub fn questions_for(&self, doc: &Document) -> usize {
        if doc.word_count() <= self.abstract_max_words {
            self.mcqs_per_abstract
        } else {
            self.mcqs_per_paper
        }
    }
}

/// A model to evaluate and the gateway that serves it.
pub struct Answerer<'a> {
    pub model_id: String,
    pub gateway: &'a Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub model_id: String,
    pub condition: EvalCondition,
    pub domain: DomainTag,
    pub doc_id: String,
    pub question_set_id: String,
    pub question_index: usize,
    pub correct_index: usize,
    pub chosen: Option<usize>,
    pub correct: bool,
    pub mode: AnswerMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model_id: String,
    pub condition: EvalCondition,
    pub domain: DomainTag,
    pub correct: usize,
    pub n_questions: usize,
    pub accuracy: f64,
    pub stderr: f64,
    /// Sample standard deviation of per-set accuracy, with two or more sets.
    pub set_stddev: Option<f64>,
}

impl EvalCell {
    fn from_counts(
        model_id: &str,
        condition: EvalCondition,
        domain: DomainTag,
        correct: usize,
        n: usize,
        sets: &[(usize, usize)],
    ) -> Self {
        let p = accuracy(correct, n);
        let set_rates: Vec<f64> = sets
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|&(c, n)| accuracy(c, n))
            .collect();
        Self {
            model_id: model_id.to_string(),
            condition,
            domain,
            correct,
            n_questions: n,
            accuracy: p,
            stderr: if n == 0 {
                0.0
            } else {
                (p * (1.0 - p) / n as f64).sqrt()
            },
            set_stddev: sample_stddev(&set_rates),
        }
    }
}

pub fn accuracy(correct: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        correct as f64 / n as f64
    }
}

fn sample_stddev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub seed: u64,
    pub question_sets: usize,
    pub generator_model: String,
    pub prompt_versions: Vec<String>,
    pub answer_modes: BTreeMap<String, AnswerMode>,
    pub rejected_items: Vec<String>,
    pub ku_context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub questions: Vec<QuestionResult>,
    pub flags: Vec<String>,
    pub metadata: EvalMetadata,
}

/// One question to answer, fully resolved.
struct Job<'a> {
    answerer: usize,
    condition: EvalCondition,
    doc: &'a Document,
    mcq: Mcq,
    question_index: usize,
    set_index: usize,
    context: &'a str,
    seed: u64,
}

/// Generates question sets and evaluates every model under every condition.
pub fn run_eval(
    docs: &[Document],
    kb: Option<&dyn KuLookup>,
    generator: &Gateway,
    answerers: &[Answerer<'_>],
    conditions: &[EvalCondition],
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<Mcq>), McqError> {
    let want_ku = conditions.contains(&EvalCondition::KnowledgeUnits);
    let mut ku_contexts: BTreeMap<&str, String> = BTreeMap::new();
    if want_ku {
        let mut missing = Vec::new();
        for d in docs {
            match kb.and_then(|kb| kb.lookup(&d.doc_id)) {
                Some(kd) if !kd.units.is_empty() => {
                    ku_contexts.insert(&d.doc_id, ku_context(&kd.units));
                }
                _ => missing.push(d.doc_id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(McqError::MissingKus(missing));
        }
    }

    let mcq_stream = derive_seed(cfg.seed, seed::MCQ);
    let shuffle_stream = derive_seed(cfg.seed, seed::SHUFFLE);
    let answer_stream = derive_seed(cfg.seed, seed::ANSWER);
    let sets = cfg.question_sets.max(1);

    let mut all_questions: Vec<(usize, &Document, Mcq)> = Vec::new();
    let mut rejected = Vec::new();
    for d in docs {
        for r in 0..sets {
            let set_id = format!("{}/set{r}", d.doc_id);
            let spec = GenerationSpec {
                doc_id: &d.doc_id,
                question_set_id: &set_id,
                generator_model: &cfg.generator_model,
                seed: item_seed(mcq_stream, &set_id),
            };
            let g = generate_mcqs(&d.body, cfg.questions_for(d), &spec, generator)?;
            rejected.extend(g.rejected.into_iter().map(|m| format!("{set_id}: {m}")));
            for q in g.questions {
                all_questions.push((r, d, q));
            }
        }
    }

    let empty = String::new();
    let mut jobs = Vec::new();
    for (a, answerer) in answerers.iter().enumerate() {
        for &condition in conditions {
            let mut per_set_index: BTreeMap<String, usize> = BTreeMap::new();
            for (r, d, q) in &all_questions {
                let idx = per_set_index.entry(q.question_set_id.clone()).or_insert(0);
                let qid = format!("{}#{}", q.question_set_id, idx);
                let context: &str = match condition {
                    EvalCondition::NoContext => &empty,
                    EvalCondition::OriginalText => &d.body,
                    EvalCondition::KnowledgeUnits => &ku_contexts[d.doc_id.as_str()],
                };
                jobs.push(Job {
                    answerer: a,
                    condition,
                    doc: d,
                    mcq: q.shuffled(item_seed(shuffle_stream, &qid)),
                    question_index: *idx,
                    set_index: *r,
                    context,
                    seed: item_seed(
                        answer_stream,
                        &format!("{qid}|{}|{condition}", answerer.model_id),
                    ),
                });
                *idx += 1;
            }
        }
    }

    let outcomes = parallel_map(&jobs, cfg.jobs, |j| {
        let ans = &answerers[j.answerer];
        answer_mcq(
            &j.mcq,
            j.condition,
            j.context,
            &ans.model_id,
            j.seed,
            ans.gateway,
        )
    });

    let mut questions = Vec::with_capacity(jobs.len());
    let mut modes: BTreeMap<String, AnswerMode> = BTreeMap::new();
    // (model, condition, domain) -> per-set (correct, n)
    let mut tallies: BTreeMap<(String, EvalCondition, DomainTag), Vec<(usize, usize)>> =
        BTreeMap::new();
    for (j, outcome) in jobs.iter().zip(outcomes) {
        let outcome = outcome?;
        let model_id = &answerers[j.answerer].model_id;
        modes.entry(model_id.clone()).or_insert(outcome.mode);
        let correct = outcome.chosen == Some(j.mcq.correct_index);
        let per_set = tallies
            .entry((model_id.clone(), j.condition, j.doc.domain))
            .or_insert_with(|| vec![(0, 0); sets]);
        per_set[j.set_index].0 += correct as usize;
        per_set[j.set_index].1 += 1;
        questions.push(QuestionResult {
            model_id: model_id.clone(),
            condition: j.condition,
            domain: j.doc.domain,
            doc_id: j.doc.doc_id.clone(),
            question_set_id: j.mcq.question_set_id.clone(),
            question_index: j.question_index,
            correct_index: j.mcq.correct_index,
            chosen: outcome.chosen,
            correct,
            mode: outcome.mode,
        });
    }

    let cells: Vec<EvalCell> = tallies
        .iter()
        .map(|((m, c, d), per_set)| {
            let correct = per_set.iter().map(|s| s.0).sum();
            let n = per_set.iter().map(|s| s.1).sum();
            EvalCell::from_counts(m, *c, *d, correct, n, per_set)
        })
        .collect();
    let flags = bound_flags(&cells);

    let mut prompt_versions = vec![prompts::MCQ_GENERATE.version.to_string()];
    for m in modes.values().collect::<BTreeSet<_>>() {
        prompt_versions.push(match m {
            AnswerMode::Cloze => prompts::MCQ_CLOZE.version.to_string(),
            AnswerMode::Letter => prompts::MCQ_ANSWER.version.to_string(),
        });
    }
    let mcqs = all_questions.into_iter().map(|(_, _, q)| q).collect();
    Ok((
        EvalReport {
            cells,
            questions,
            flags,
            metadata: EvalMetadata {
                seed: cfg.seed,
                question_sets: sets,
                generator_model: cfg.generator_model.clone(),
                prompt_versions,
                answer_modes: modes,
                rejected_items: rejected,
                ku_context: "all units of the document in chunk order, pretty JSON".into(),
            },
        },
        mcqs,
    ))
}

/// Annotates (model, domain) pairs whose KU accuracy falls outside the
/// no-context to original-text range.
pub fn bound_flags(cells: &[EvalCell]) -> Vec<String> {
    let get = |m: &str, d: DomainTag, c: EvalCondition| {
        cells
            .iter()
            .find(|x| x.model_id == m && x.domain == d && x.condition == c)
            .map(|x| x.accuracy)
    };
    let mut out = Vec::new();
    let pairs: BTreeSet<(&str, DomainTag)> = cells
        .iter()
        .map(|c| (c.model_id.as_str(), c.domain))
        .collect();
    for (m, d) in pairs {
        let Some(ku) = get(m, d, EvalCondition::KnowledgeUnits) else {
            continue;
        };
        if let Some(hi) = get(m, d, EvalCondition::OriginalText) {
            if ku > hi {
                out.push(format!(
                    "{m}/{d}: KU accuracy {:.2} above original-text {:.2}",
                    ku * 100.0,
                    hi * 100.0
                ));
            }
        }
        if let Some(lo) = get(m, d, EvalCondition::NoContext) {
            if ku < lo {
                out.push(format!(
                    "{m}/{d}: KU accuracy {:.2} below no-context {:.2}",
                    ku * 100.0,
                    lo * 100.0
                ));
            }
        }
    }
    out
}

fn csv_error(e: csv::Error) -> McqError {
    McqError::InvalidMcq(format!("csv: {e}"))
}

pub fn cells_to_csv(cells: &[EvalCell]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn cells_from_csv(text: &str) -> Result<Vec<EvalCell>, McqError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<EvalCell>, _>>()
        .map_err(csv_error)
}

pub fn questions_to_csv(rows: &[QuestionResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Table with one row per model: `[no-context - original]` bounds and the
/// KU accuracy for each domain, in percent.
pub fn render_accuracy_table(cells: &[EvalCell]) -> String {
    let domains: Vec<DomainTag> = DomainTag::ALL
        .into_iter()
        .filter(|d| cells.iter().any(|c| c.domain == *d))
        .collect();
    let models: BTreeSet<&str> = cells.iter().map(|c| c.model_id.as_str()).collect();
    let pct = |m: &str, d: DomainTag, c: EvalCondition| {
        cells
            .iter()
            .find(|x| x.model_id == m && x.domain == d && x.condition == c)
            .map(|x| format!("{:.2}", x.accuracy * 100.0))
            .unwrap_or_else(|| "n/a".into())
    };
    let mut header = vec!["Model".to_string()];
    for d in &domains {
        header.push(format!("{} [lower-upper]", d.label()));
        header.push(format!("{} KU", d.label()));
    }
    let mut rows = vec![header];
    for m in models {
        let mut row = vec![m.to_string()];
        for &d in &domains {
            row.push(format!(
                "[{}-{}]",
                pct(m, d, EvalCondition::NoContext),
                pct(m, d, EvalCondition::OriginalText)
            ));
            row.push(pct(m, d, EvalCondition::KnowledgeUnits));
        }
        rows.push(row);
    }
    render_rows(&rows)
}

/// Left-aligned pipe table with a rule under the header.
pub fn render_rows(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| {
            rows.iter()
                .filter_map(|r| r.get(i))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (n, r) in rows.iter().enumerate() {
        let cells: Vec<String> = (0..cols)
            .map(|i| {
                let s = r.get(i).map(String::as_str).unwrap_or("");
                format!("{s:<w$}", w = widths[i])
            })
            .collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
        if n == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mcq() -> Mcq {
        Mcq {
            question: "Q?".into(),
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            correct_index: 2,
            doc_id: "d".into(),
            generator_model: "m".into(),
            question_set_id: "d/set0".into(),
        }
    }

    #[test]
    fn validation_rules() {
        assert!(mcq().validate().is_ok());
        let mut q = mcq();
        q.options.pop();
        assert!(q.validate().is_err());
        let mut q = mcq();
        q.options[1] = "A".into();
        assert!(q.validate().is_err());
        let mut q = mcq();
        q.correct_index = 4;
        assert!(q.validate().is_err());
    }

    #[test]
    fn shuffle_tracks_the_key() {
        for s in 0..50 {
            let q = mcq().shuffled(s);
            assert_eq!(q.options[q.correct_index], "c");
            assert_eq!(q, mcq().shuffled(s));
        }
    }

    #[test]
    fn argmax_ties_go_low_and_affine_invariant() {
        assert_eq!(cloze_argmax(&[0.1, 0.7, 0.7, 0.2]), Some(1));
        assert_eq!(cloze_argmax(&[f64::NAN, 0.0, -1.0, 0.0]), Some(1));
        let s = [0.3, -2.0, 1.25, 0.9];
        for (a, b) in [(2.0, 5.0), (0.01, -3.0), (100.0, 0.0)] {
            let t: Vec<f64> = s.iter().map(|x| a * x + b).collect();
            assert_eq!(cloze_argmax(&t), cloze_argmax(&s));
        }
    }

    #[test]
    fn strict_letters() {
        assert_eq!(parse_letter(" B\n"), Some(1));
        assert_eq!(parse_letter("The answer is B."), None);
        assert_eq!(parse_letter("b"), None);
        assert_eq!(parse_letter("AB"), None);
    }

    #[test]
    fn accuracy_is_exact() {
        assert_eq!(accuracy(7, 10), 0.7);
        let c = EvalCell::from_counts(
            "m",
            EvalCondition::NoContext,
            DomainTag::Cs,
            7,
            10,
            &[(7, 10)],
        );
        assert_eq!(c.accuracy, 0.7);
        assert_eq!(c.set_stddev, None);
    }

    #[test]
    fn cells_round_trip_through_csv() {
        let cells = vec![
            EvalCell::from_counts(
                "m",
                EvalCondition::KnowledgeUnits,
                DomainTag::Physics,
                2,
                3,
                &[(1, 1), (1, 2)],
            ),
            EvalCell::from_counts(
                "m",
                EvalCondition::NoContext,
                DomainTag::Physics,
                0,
                3,
                &[(0, 3)],
            ),
        ];
        let back = cells_from_csv(&cells_to_csv(&cells)).unwrap();
        assert_eq!(back, cells);
    }
}
