//! Versioned prompt templates and few-shot exemplars.
//!
//! Templates live in `prompts/*.txt`. Each starts with `TASK:` and
//! `PROMPT_VERSION:` lines and delimits its payload with `=== NAME ===`
//! section markers, which lets the mock provider and audits recover the
//! parts of a rendered prompt.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::corpus::DomainTag;

pub struct Template {
    pub version: &'static str,
    pub task: &'static str,
    pub text: &'static str,
}

pub const EXTRACT: Template = Template {
    version: "extract.v1",
    task: "extract_knowledge_unit",
    text: include_str!("../prompts/extract.v1.txt"),
};

pub const HEADER: Template = Template {
    version: "header.v1",
    task: "document_header",
    text: include_str!("../prompts/header.v1.txt"),
};

pub const MCQ_GENERATE: Template = Template {
    version: "mcq_generate.v1",
    task: "generate_mcqs",
    text: include_str!("../prompts/mcq_generate.v1.txt"),
};

pub const MCQ_ANSWER: Template = Template {
    version: "mcq_answer.v1",
    task: "answer_mcq",
    text: include_str!("../prompts/mcq_answer.v1.txt"),
};

pub const MCQ_CLOZE: Template = Template {
    version: "mcq_cloze.v1",
    task: "cloze_mcq",
    text: include_str!("../prompts/mcq_cloze.v1.txt"),
};

pub const RECONSTRUCT: Template = Template {
    version: "reconstruct.v1",
    task: "reconstruct_text",
    text: include_str!("../prompts/reconstruct.v1.txt"),
};

pub const SYSTEM_PROMPT: &str =
    "You are a careful research assistant. Follow the output format exactly.";

impl Template {
    /// Substitutes `{{name}}` placeholders. Unknown placeholders are left as is.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        out
    }
}

/// The `TASK:` line of a rendered prompt.
pub fn task_of(prompt: &str) -> Option<&str> {
    prompt.lines().next()?.strip_prefix("TASK:").map(str::trim)
}

/// Section bodies of a rendered prompt keyed by marker name.
pub fn sections(prompt: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in prompt.lines() {
        let marker = line
            .strip_prefix("=== ")
            .and_then(|l| l.strip_suffix(" ==="));
        if let Some(name) = marker {
            if let Some((n, body)) = current.take() {
                out.insert(n, body.join("\n").trim().to_string());
            }
            current = Some((name.to_string(), Vec::new()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    if let Some((n, body)) = current {
        out.insert(n, body.join("\n").trim().to_string());
    }
    out
}

/// One text → Knowledge Unit example per domain.
#[derive(Debug, Clone, Deserialize)]
pub struct Exemplar {
    pub domain: DomainTag,
    pub text: String,
    pub output: serde_json::Value,
}

pub fn exemplar(domain: DomainTag) -> &'static Exemplar {
    static ALL: OnceLock<Vec<Exemplar>> = OnceLock::new();
    let all = ALL.get_or_init(|| {
        [
            include_str!("../data/exemplars/medical.json"),
            include_str!("../data/exemplars/cs.json"),
            include_str!("../data/exemplars/math.json"),
            include_str!("../data/exemplars/physics.json"),
            include_str!("../data/exemplars/other.json"),
        ]
        .iter()
        .map(|s| serde_json::from_str(s).expect("bundled exemplar is valid JSON"))
        .collect()
    });
    all.iter()
        .find(|e| e.domain == domain)
        .unwrap_or_else(|| all.last().expect("exemplars are bundled"))
}
