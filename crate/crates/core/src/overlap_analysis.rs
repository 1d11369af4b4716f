//! Text reuse between sources and Knowledge Units or reconstructions.
//!
//! Two measures are reported per pair: word n-gram Jaccard similarity for
//! each requested n, and a fingerprint score in the spirit of classic
//! plagiarism detectors (token 3-gram multisets matched against the shorter
//! text). The fingerprint score is a reimplementation of the idea, not a
//! bit-compatible port of any particular tool.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DomainTag;
use crate::ku_model::KuDocument;
use crate::llm_gateway::{Gateway, GatewayError, GenerationRequest};
use crate::mcq_eval::render_rows;
use crate::prompts::{self, exemplar};
use crate::provenance::{jaccard, normalize_words, shingles_of};

pub const DEFAULT_NS: [usize; 3] = [5, 7, 11];
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;
pub const FINGERPRINT_N: usize = 3;
/// Scores below this percentage are conventionally treated as negligible.
pub const NEGLIGIBLE_PLAGIARISM: f64 = 20.0;
pub const KU_TEXT_RULE: &str =
    "all string values of all units in canonical field order, joined by spaces";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OverlapError {
    #[error("at least one n-gram size is required")]
    NoNgramSizes,
    #[error("n-gram size must be at least 1")]
    ZeroNgramSize,
    #[error("no rows to select from")]
    EmptyInput,
    #[error("fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("Knowledge Unit document `{0}` has no units to reconstruct from")]
    EmptyKuDocument(String),
    #[error("overlap csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OverlapKind {
    SourceVsKu,
    SourceVsReconstruction,
}

impl OverlapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OverlapKind::SourceVsKu => "SOURCE_VS_KU",
            OverlapKind::SourceVsReconstruction => "SOURCE_VS_RECONSTRUCTION",
        }
    }

    fn label(self) -> &'static str {
        match self {
            OverlapKind::SourceVsKu => "Original vs KU",
            OverlapKind::SourceVsReconstruction => "Original vs reconstruction",
        }
    }
}

impl fmt::Display for OverlapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OverlapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SOURCE_VS_KU" => Ok(OverlapKind::SourceVsKu),
            "SOURCE_VS_RECONSTRUCTION" => Ok(OverlapKind::SourceVsReconstruction),
            other => Err(format!("unknown overlap kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub left_text: String,
    pub right_text: String,
    pub pair_id: String,
    pub kind: OverlapKind,
}

impl OverlapPair {
    /// Source text against the flattened units of its document.
    pub fn source_vs_ku(source: &str, kd: &KuDocument) -> Self {
        Self {
            left_text: source.to_string(),
            right_text: kd.flat_text(),
            pair_id: kd.doc_id.clone(),
            kind: OverlapKind::SourceVsKu,
        }
    }
}

/// Jaccard similarity of the word n-gram sets, for each `n` in `ns`.
pub fn pair_overlap(pair: &OverlapPair, ns: &[usize]) -> Result<Vec<(usize, f64)>, OverlapError> {
    if ns.is_empty() {
        return Err(OverlapError::NoNgramSizes);
    }
    if ns.contains(&0) {
        return Err(OverlapError::ZeroNgramSize);
    }
    let left = normalize_words(&pair.left_text);
    let right = normalize_words(&pair.right_text);
    Ok(ns
        .iter()
        .map(|&n| (n, jaccard(&shingles_of(&left, n), &shingles_of(&right, n))))
        .collect())
}

fn fingerprints(words: &[String]) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if words.len() >= FINGERPRINT_N {
        for w in words.windows(FINGERPRINT_N) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Percentage of the shorter text's token 3-grams matched in the other
/// text, counting repeated 3-grams as a multiset. Symmetric; 0 when either
/// side has fewer than three tokens.
pub fn plagiarism_score(left: &str, right: &str) -> f64 {
    let a = normalize_words(left);
    let b = normalize_words(right);
    let fa = fingerprints(&a);
    let fb = fingerprints(&b);
    let na = a.len().saturating_sub(FINGERPRINT_N - 1);
    let nb = b.len().saturating_sub(FINGERPRINT_N - 1);
    let shorter = na.min(nb);
    if shorter == 0 || fa.is_empty() || fb.is_empty() {
        return 0.0;
    }
    let matched: usize = fa
        .iter()
        .map(|(g, ca)| fb.get(g).map_or(0, |cb| (*ca).min(*cb)))
        .sum();
    100.0 * matched as f64 / shorter as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub pair_id: String,
    pub kind: OverlapKind,
    /// `(n, jaccard)` in the order requested.
    pub jaccard: Vec<(usize, f64)>,
    pub plagiarism: f64,
}

impl OverlapRow {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Jaccard(n) => self
                .jaccard
                .iter()
                .find(|(k, _)| *k == n)
                .map_or(0.0, |(_, v)| *v),
            Metric::Plagiarism => self.plagiarism,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Jaccard(usize),
    Plagiarism,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Jaccard(n) => write!(f, "{n}-gram Jaccard"),
            Metric::Plagiarism => f.write_str("Plagiarism score"),
        }
    }
}

pub fn score_pair(pair: &OverlapPair, ns: &[usize]) -> Result<OverlapRow, OverlapError> {
    Ok(OverlapRow {
        pair_id: pair.pair_id.clone(),
        kind: pair.kind,
        jaccard: pair_overlap(pair, ns)?,
        plagiarism: plagiarism_score(&pair.left_text, &pair.right_text),
    })
}

/// The `ceil(fraction * N)` rows with the highest `metric`; ties are broken
/// by ascending `pair_id`.
pub fn top_fraction(
    rows: &[OverlapRow],
    fraction: f64,
    metric: Metric,
) -> Result<Vec<&OverlapRow>, OverlapError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(OverlapError::InvalidFraction(fraction));
    }
    if rows.is_empty() {
        return Err(OverlapError::EmptyInput);
    }
    // Guard against products such as 0.05 * 100 landing just above 5.
    let k = ((fraction * rows.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted: Vec<&OverlapRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        b.metric(metric)
            .total_cmp(&a.metric(metric))
            .then_with(|| a.pair_id.cmp(&b.pair_id))
    });
    sorted.truncate(k.min(rows.len()));
    Ok(sorted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub kind: OverlapKind,
    pub metric: String,
    pub n_pairs: usize,
    pub overall_mean: f64,
    pub top_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub ns: Vec<usize>,
    pub top_fraction: f64,
    pub rows: Vec<OverlapRow>,
    pub summary: Vec<MetricSummary>,
    pub ku_text_rule: String,
    pub plagiarism_unit: String,
    pub negligible_threshold: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn build_report(
    rows: Vec<OverlapRow>,
    ns: &[usize],
    fraction: f64,
) -> Result<OverlapReport, OverlapError> {
    if rows.is_empty() {
        return Err(OverlapError::EmptyInput);
    }
    let mut by_kind: BTreeMap<OverlapKind, Vec<OverlapRow>> = BTreeMap::new();
    for r in &rows {
        by_kind.entry(r.kind).or_default().push(r.clone());
    }
    let metrics: Vec<Metric> = ns
        .iter()
        .map(|&n| Metric::Jaccard(n))
        .chain([Metric::Plagiarism])
        .collect();
    let mut summary = Vec::new();
    for (kind, group) in &by_kind {
        for &m in &metrics {
            let top = top_fraction(group, fraction, m)?;
            summary.push(MetricSummary {
                kind: *kind,
                metric: m.to_string(),
                n_pairs: group.len(),
                overall_mean: mean(group.iter().map(|r| r.metric(m))),
                top_mean: mean(top.iter().map(|r| r.metric(m))),
            });
        }
    }
    Ok(OverlapReport {
        ns: ns.to_vec(),
        top_fraction: fraction,
        rows,
        summary,
        ku_text_rule: KU_TEXT_RULE.into(),
        plagiarism_unit: "each Knowledge Unit document scored as one string".into(),
        negligible_threshold: NEGLIGIBLE_PLAGIARISM,
    })
}

/// Per-pair CSV: `pair_id, kind, j<n>..., plag`.
pub fn rows_to_csv(rows: &[OverlapRow], ns: &[usize]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["pair_id".to_string(), "kind".to_string()];
    header.extend(ns.iter().map(|n| format!("j{n}")));
    header.push("plag".into());
    w.write_record(&header).expect("in-memory csv write");
    for r in rows {
        let mut rec = vec![r.pair_id.clone(), r.kind.to_string()];
        rec.extend(
            ns.iter()
                .map(|&n| format!("{:.6}", r.metric(Metric::Jaccard(n)))),
        );
        rec.push(format!("{:.4}", r.plagiarism));
        w.write_record(&rec).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Parses [`rows_to_csv`] output; returns the rows and the n-gram sizes.
pub fn rows_from_csv(text: &str) -> Result<(Vec<OverlapRow>, Vec<usize>), OverlapError> {
    let err = |m: String| OverlapError::Csv(m);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| err(e.to_string()))?.clone();
    let mut ns = Vec::new();
    for h in headers.iter().skip(2) {
        if let Some(n) = h.strip_prefix('j') {
            ns.push(
                n.parse::<usize>()
                    .map_err(|_| err(format!("bad column `{h}`")))?,
            );
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |i: usize| -> Result<f64, OverlapError> {
            rec.get(i)
                .ok_or_else(|| err("short record".into()))?
                .parse::<f64>()
                .map_err(|e| err(e.to_string()))
        };
        let mut jac = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            jac.push((n, num(2 + i)?));
        }
        rows.push(OverlapRow {
            pair_id: rec.get(0).unwrap_or_default().to_string(),
            kind: rec.get(1).unwrap_or_default().parse().map_err(err)?,
            jaccard: jac,
            plagiarism: num(2 + ns.len())?,
        });
    }
    Ok((rows, ns))
}

/// Summary table: average and top-fraction means per kind and metric.
pub fn render_overlap_table(report: &OverlapReport) -> String {
    let top = format!("Top {}%", fmt_pct(report.top_fraction * 100.0));
    let mut rows = vec![vec![
        "Comparison".to_string(),
        "Metric".into(),
        "Average".into(),
        top,
    ]];
    for s in &report.summary {
        let digits = if s.metric.starts_with("Plag") { 2 } else { 3 };
        rows.push(vec![
            s.kind.label().to_string(),
            s.metric.clone(),
            format!("{:.*}", digits, s.overall_mean),
            format!("{:.*}", digits, s.top_mean),
        ]);
    }
    let mut out = render_rows(&rows);
    out.push_str(&format!(
        "\nPlagiarism scores are percentages; values below {} are considered negligible.\n",
        report.negligible_threshold
    ));
    out
}

fn fmt_pct(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x}")
    }
}

/// A reconstruction together with the exact prompt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub text: String,
    pub prompt: String,
}

fn exemplar_block(domain: DomainTag) -> String {
    let ex = exemplar(domain);
    format!(
        "KNOWLEDGE UNITS:\n{}\nPASSAGE:\n{}",
        serde_json::to_string_pretty(&ex.output).expect("exemplar serializes"),
        ex.text
    )
}

/// Regenerates prose from the units of `kd` alone, guided by a same-domain
/// example. The source text is never part of the prompt.
pub fn reconstruct_text(
    kd: &KuDocument,
    domain: DomainTag,
    model_id: &str,
    seed: u64,
    gateway: &Gateway,
) -> Result<Reconstruction, OverlapError> {
    if kd.units.is_empty() {
        return Err(OverlapError::EmptyKuDocument(kd.doc_id.clone()));
    }
    let units: Vec<serde_json::Value> = kd
        .units
        .iter()
        .map(|u| serde_json::json!({"context_summary": u.context_summary, "entities": u.entities}))
        .collect();
    let units = serde_json::to_string_pretty(&units).expect("units serialize");
    let prompt = prompts::RECONSTRUCT.render(&[
        ("examples", &exemplar_block(domain)),
        ("domain", domain.label()),
        ("units", &units),
    ]);
    let req =
        GenerationRequest::new(model_id, prompts::SYSTEM_PROMPT, prompt.clone()).with_seed(seed);
    let text = gateway.generate(&req)?.trim().to_string();
    Ok(Reconstruction { text, prompt })
}
