//! One function per subcommand. Each validates its inputs, builds the
//! gateway (which makes no call), then does the work.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use alexandria_core::corpus::{chunk_document, load_corpus, ABBREVIATIONS_VERSION};
use alexandria_core::embed_baseline::{self, run_embedding_study};
use alexandria_core::extraction::{extract_document, ExtractionConfig};
use alexandria_core::kb_store::{KnowledgeBase, STORE_FORMAT};
use alexandria_core::ku_model::{validate_ku, KuLookup, ValidationOptions, KU_SCHEMA_VERSION};
use alexandria_core::mcq_eval::{
    cells_from_csv, cells_to_csv, questions_to_csv, render_accuracy_table, run_eval, to_mcq_jsonl,
    Answerer, EvalConfig,
};
use alexandria_core::overlap_analysis::{
    build_report, reconstruct_text, render_overlap_table, rows_from_csv, rows_to_csv, score_pair,
    OverlapKind,
};
use alexandria_core::par::parallel_map;
use alexandria_core::seed::{self, derive_seed, item_seed};
use alexandria_core::vocab::VOCABULARY_VERSION;
use alexandria_core::{
    prompts, ChunkPolicy, Document, EvalCondition, OverlapPair, MINHASH_VERSION,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{build_gateway, ProviderArgs, MOCK_EMBEDDER, MOCK_PROVIDER};
use crate::*;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct RunRecord<R> {
    tool: String,
    version: String,
    invocation: Command,
    resolved: R,
}

fn write_run_json(out: &Path, invocation: &Command, resolved: impl Serialize) -> Result<()> {
    let record = RunRecord {
        tool: "alexandria".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: invocation.clone(),
        resolved,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    write(out, "run.json", text)
}

fn load_docs(path: &Path) -> Result<Vec<Document>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn open_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::open(path).with_context(|| format!("opening knowledge base {}", path.display()))
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct ExtractResolved {
    extraction: ExtractionConfig,
    chunk_policies: BTreeMap<String, ChunkPolicy>,
    prompt_versions: Vec<&'static str>,
    ku_schema: &'static str,
    minhash_version: &'static str,
    abbreviations_version: &'static str,
    store_format: &'static str,
}

pub fn cmd_extract(a: &ExtractArgs, invocation: &Command) -> Result<i32> {
    let docs = load_docs(&a.corpus)?;
    if a.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    if a.chunk_min_tokens > a.chunk_max_tokens {
        bail!("--chunk-min-tokens exceeds --chunk-max-tokens");
    }
    ensure_dir(&a.out)?;
    let mut kb =
        KnowledgeBase::open_writer(&a.kb).with_context(|| format!("opening {}", a.kb.display()))?;
    let present: Vec<&str> = docs
        .iter()
        .filter(|d| kb.entry(&d.doc_id).is_some())
        .map(|d| d.doc_id.as_str())
        .collect();
    if !present.is_empty() {
        bail!(
            "already stored in {}: {}",
            a.kb.display(),
            present.join(", ")
        );
    }
    let gateway = build_gateway(&a.provider, &[&a.model])?;

    let tokens = ChunkPolicy::TokenRange {
        min: a.chunk_min_tokens,
        max: a.chunk_max_tokens,
    };
    let words = ChunkPolicy::WordTarget {
        words: a.segment_words,
    };
    let policy_for = |d: &Document| match a.chunk_policy {
        ChunkPolicyArg::Tokens => tokens,
        ChunkPolicyArg::Words => words,
        ChunkPolicyArg::Auto if d.word_count() <= a.abstract_max_words => tokens,
        ChunkPolicyArg::Auto => words,
    };
    let base = ExtractionConfig {
        context_window_kus: a.context_window,
        chunk_policy: tokens,
        guard_n: a.guard_n,
        strict_leakage: a.strict_leakage,
        extractor_model: a.model.clone(),
        seed: a.seed,
        ..ExtractionConfig::default()
    };
    let results = parallel_map(&docs, a.jobs, |d| {
        let cfg = ExtractionConfig {
            chunk_policy: policy_for(d),
            ..base.clone()
        };
        extract_document(d, &cfg, &gateway)
    });

    let mut rows = Vec::new();
    let mut warnings = String::new();
    let mut failed = 0;
    for (d, r) in docs.iter().zip(results) {
        match r {
            Ok(kd) => {
                let ingest = kb.put(&kd)?;
                for w in &kd.record.warnings {
                    warnings.push_str(&format!("{}: {w}\n", d.doc_id));
                }
                if let Some(of) = &ingest.duplicate_suspect_of {
                    warnings.push_str(&format!("{}: duplicate suspect of {of}\n", d.doc_id));
                }
                rows.push(vec![
                    d.doc_id.clone(),
                    "ok".into(),
                    kd.record.chunk_count.to_string(),
                    kd.units.len().to_string(),
                    kd.record.failures.len().to_string(),
                    kd.record.truncations.len().to_string(),
                    kd.record.warnings.len().to_string(),
                    ingest.duplicate_suspect_of.unwrap_or_default(),
                    format!("{:.4}", ingest.max_overlap),
                ]);
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", d.doc_id);
                warnings.push_str(&format!("{}: failed: {e}\n", d.doc_id));
                let mut row = vec![d.doc_id.clone(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 7));
                rows.push(row);
            }
        }
    }
    gateway.flush_audit()?;
    let header = [
        "doc_id",
        "status",
        "chunks",
        "units",
        "failed_chunks",
        "truncations",
        "warnings",
        "duplicate_of",
        "max_overlap",
    ];
    write(&a.out, "extraction.csv", csv_string(&header, &rows)?)?;
    write(&a.out, "warnings.txt", warnings)?;
    write_run_json(
        &a.out,
        invocation,
        ExtractResolved {
            extraction: base,
            chunk_policies: docs
                .iter()
                .map(|d| (d.doc_id.clone(), policy_for(d)))
                .collect(),
            prompt_versions: vec![prompts::EXTRACT.version, prompts::HEADER.version],
            ku_schema: KU_SCHEMA_VERSION,
            minhash_version: MINHASH_VERSION,
            abbreviations_version: ABBREVIATIONS_VERSION,
            store_format: STORE_FORMAT,
        },
    )?;
    println!(
        "extracted {} of {} documents into {}",
        docs.len() - failed,
        docs.len(),
        a.kb.display()
    );
    Ok(if failed > 0 { EXIT_FAILURE } else { EXIT_OK })
}

fn parse_conditions(raw: &[String]) -> Result<Vec<EvalCondition>> {
    let mut out = Vec::new();
    for r in raw {
        let c: EvalCondition = r.parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        bail!("no conditions selected");
    }
    Ok(out)
}

pub fn cmd_eval_mcq(a: &EvalArgs, invocation: &Command) -> Result<i32> {
    let conditions = parse_conditions(&a.conditions)?;
    if conditions.contains(&EvalCondition::KnowledgeUnits) && a.kb.is_none() {
        bail!("the KNOWLEDGE_UNITS condition requires --kb");
    }
    if a.models.is_empty() {
        bail!("--models is empty");
    }
    let docs = load_docs(&a.corpus)?;
    let kb = a.kb.as_deref().map(open_kb).transpose()?;
    if let Some(kb) = &kb {
        let missing: Vec<&str> = docs
            .iter()
            .filter(|d| kb.entry(&d.doc_id).is_none())
            .map(|d| d.doc_id.as_str())
            .collect();
        if conditions.contains(&EvalCondition::KnowledgeUnits) && !missing.is_empty() {
            bail!("no Knowledge Units stored for: {}", missing.join(", "));
        }
    }
    ensure_dir(&a.out)?;
    let mut model_ids: Vec<&str> = a.models.iter().map(String::as_str).collect();
    model_ids.push(&a.generator_model);
    let gateway = build_gateway(&a.provider, &model_ids)?;

    let cfg = EvalConfig {
        seed: a.seed,
        question_sets: a.question_sets,
        mcqs_per_abstract: a.mcqs_per_abstract,
        mcqs_per_paper: a.mcqs_per_paper,
        abstract_max_words: a.abstract_max_words,
        generator_model: a.generator_model.clone(),
        jobs: a.jobs.max(1),
    };
    let answerers: Vec<Answerer<'_>> = a
        .models
        .iter()
        .map(|m| Answerer {
            model_id: m.clone(),
            gateway: &gateway,
        })
        .collect();
    let lookup = kb.as_ref().map(|k| k as &dyn KuLookup);
    let (report, mcqs) = run_eval(&docs, lookup, &gateway, &answerers, &conditions, &cfg)?;
    gateway.flush_audit()?;

    write(&a.out, "mcqs.jsonl", to_mcq_jsonl(&mcqs))?;
    write(&a.out, "cells.csv", cells_to_csv(&report.cells))?;
    write(&a.out, "questions.csv", questions_to_csv(&report.questions))?;
    let mut table = render_accuracy_table(&report.cells);
    for f in &report.flags {
        table.push_str(&format!("note: {f}\n"));
    }
    write(&a.out, "accuracy.md", &table)?;
    let summary = serde_json::json!({ "flags": report.flags, "metadata": report.metadata });
    write(
        &a.out,
        "eval.json",
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    write_run_json(
        &a.out,
        invocation,
        serde_json::json!({ "eval": cfg, "conditions": conditions }),
    )?;
    print!("{table}");
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReconstructionLine {
    doc_id: String,
    model_id: String,
    text: String,
}

pub fn cmd_overlap(a: &OverlapArgs, invocation: &Command) -> Result<i32> {
    if a.ns.is_empty() || a.ns.contains(&0) {
        bail!("--ns must list positive n-gram sizes");
    }
    if !(a.top_fraction > 0.0 && a.top_fraction <= 1.0) {
        bail!("--top-fraction must be in (0, 1]");
    }
    let docs = load_docs(&a.corpus)?;
    let kb = open_kb(&a.kb)?;
    let mut recon: BTreeMap<String, String> = BTreeMap::new();
    if let Some(p) = &a.reconstructions {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let r: ReconstructionLine = serde_json::from_str(line)
                .with_context(|| format!("{} line {}", p.display(), i + 1))?;
            recon.insert(r.doc_id, r.text);
        }
    }
    ensure_dir(&a.out)?;
    let mut rows = Vec::new();
    for d in &docs {
        let kd = kb.get(&d.doc_id)?;
        rows.push(score_pair(&OverlapPair::source_vs_ku(&d.body, &kd), &a.ns)?);
    }
    for d in &docs {
        if let Some(text) = recon.get(&d.doc_id) {
            let pair = OverlapPair {
                left_text: d.body.clone(),
                right_text: text.clone(),
                pair_id: d.doc_id.clone(),
                kind: OverlapKind::SourceVsReconstruction,
            };
            rows.push(score_pair(&pair, &a.ns)?);
        }
    }
    let report = build_report(rows, &a.ns, a.top_fraction)?;
    write(&a.out, "overlap.csv", rows_to_csv(&report.rows, &a.ns))?;
    let summary = serde_json::json!({
        "ns": report.ns,
        "top_fraction": report.top_fraction,
        "summary": report.summary,
        "ku_text_rule": report.ku_text_rule,
        "plagiarism_unit": report.plagiarism_unit,
    });
    write(
        &a.out,
        "overlap.json",
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    let table = render_overlap_table(&report);
    write(&a.out, "overlap.md", &table)?;
    write_run_json(
        &a.out,
        invocation,
        serde_json::json!({ "minhash_version": MINHASH_VERSION }),
    )?;
    print!("{table}");
    Ok(EXIT_OK)
}

pub fn cmd_reconstruct(a: &ReconstructArgs, invocation: &Command) -> Result<i32> {
    let docs = load_docs(&a.corpus)?;
    let kb = open_kb(&a.kb)?;
    let mut pairs = Vec::new();
    for d in &docs {
        pairs.push((d, kb.get(&d.doc_id)?));
    }
    ensure_dir(&a.out)?;
    let gateway = build_gateway(&a.provider, &[&a.model])?;
    let stream = derive_seed(a.seed, seed::RECONSTRUCT);
    let results = parallel_map(&pairs, a.jobs.max(1), |(d, kd)| {
        reconstruct_text(
            kd,
            d.domain,
            &a.model,
            item_seed(stream, &d.doc_id),
            &gateway,
        )
    });
    gateway.flush_audit()?;
    let mut out = String::new();
    for ((d, _), r) in pairs.iter().zip(results) {
        let line = ReconstructionLine {
            doc_id: d.doc_id.clone(),
            model_id: a.model.clone(),
            text: r?.text,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    write(&a.out, "reconstructions.jsonl", out)?;
    write_run_json(
        &a.out,
        invocation,
        serde_json::json!({ "prompt_version": prompts::RECONSTRUCT.version }),
    )?;
    println!("reconstructed {} documents", pairs.len());
    Ok(EXIT_OK)
}

pub fn cmd_embed_baseline(a: &EmbedArgs, invocation: &Command) -> Result<i32> {
    let docs = load_docs(&a.corpus)?;
    let abstracts: Vec<Document> = docs
        .into_iter()
        .filter(|d| d.word_count() <= a.abstract_max_words)
        .collect();
    let kb = open_kb(&a.kb)?;
    ensure_dir(&a.out)?;
    let gateway = if a.embedder == MOCK_EMBEDDER {
        let mock = ProviderArgs {
            provider: MOCK_PROVIDER.into(),
            ..a.provider.clone()
        };
        build_gateway(&mock, &[])?
    } else {
        build_gateway(&a.provider, &[&a.embedder])?
    };
    let study = run_embedding_study(
        &abstracts,
        &kb,
        &gateway,
        &a.embedder,
        a.seed,
        a.jobs.max(1),
    )?;
    gateway.flush_audit()?;
    write(
        &a.out,
        "similarity.csv",
        embed_baseline::rows_to_csv(&study.rows),
    )?;
    write(
        &a.out,
        "embedding.csv",
        embed_baseline::summary_to_csv(&study.summary),
    )?;
    let table = embed_baseline::render_similarity_table(&study.summary);
    write(&a.out, "embedding.md", &table)?;
    let meta = serde_json::json!({
        "model_id": study.model_id,
        "seed": study.seed,
        "abstracts": abstracts.len(),
        "cross_domain_pairs": study.cross_domain_pairs,
    });
    write(
        &a.out,
        "embedding.json",
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    write_run_json(
        &a.out,
        invocation,
        serde_json::json!({ "vocabulary_version": VOCABULARY_VERSION }),
    )?;
    print!("{table}");
    Ok(EXIT_OK)
}

pub fn cmd_report(a: &ReportArgs, invocation: &Command) -> Result<i32> {
    let mut cells = Vec::new();
    let mut overlap_rows = Vec::new();
    let mut overlap_ns: Option<Vec<usize>> = None;
    let mut embedding = Vec::new();
    for dir in &a.runs {
        let read = |name: &str| -> Result<Option<String>> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(
                    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                ))
            } else {
                Ok(None)
            }
        };
        if let Some(t) = read("cells.csv")? {
            cells.extend(cells_from_csv(&t)?);
        }
        if let Some(t) = read("overlap.csv")? {
            let (rows, ns) = rows_from_csv(&t)?;
            if overlap_ns.as_ref().is_some_and(|prev| *prev != ns) {
                bail!("overlap CSVs disagree on n-gram sizes");
            }
            overlap_ns = Some(ns);
            overlap_rows.extend(rows);
        }
        if let Some(t) = read("embedding.csv")? {
            embedding.extend(embed_baseline::summary_from_csv(&t)?);
        }
    }
    if cells.is_empty() && overlap_rows.is_empty() && embedding.is_empty() {
        bail!("no cells.csv, overlap.csv or embedding.csv found in the given runs");
    }
    ensure_dir(&a.out)?;
    let mut report = String::new();
    if !cells.is_empty() {
        let t = render_accuracy_table(&cells);
        write(&a.out, "accuracy.md", &t)?;
        report.push_str("## MCQ accuracy (%)\n\n");
        report.push_str(&t);
        report.push('\n');
    }
    if let Some(ns) = overlap_ns {
        let r = build_report(overlap_rows, &ns, a.top_fraction)?;
        let t = render_overlap_table(&r);
        write(&a.out, "overlap.md", &t)?;
        report.push_str("## Text overlap\n\n");
        report.push_str(&t);
        report.push('\n');
    }
    if !embedding.is_empty() {
        let t = embed_baseline::render_similarity_table(&embedding);
        write(&a.out, "embedding.md", &t)?;
        report.push_str("## Embedding similarity\n\n");
        report.push_str(&t);
        report.push('\n');
    }
    write(&a.out, "report.md", &report)?;
    write_run_json(&a.out, invocation, serde_json::Value::Null)?;
    print!("{report}");
    Ok(EXIT_OK)
}

pub fn cmd_validate(a: &ValidateArgs, invocation: &Command) -> Result<i32> {
    let docs = load_docs(&a.corpus)?;
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let kb = open_kb(&a.kb)?;
    let opts = ValidationOptions {
        guard_n: a.guard_n,
        strict: a.strict,
    };
    let mut rows = Vec::new();
    let mut findings = 0;
    for doc_id in kb.doc_ids() {
        let Some(doc) = by_id.get(doc_id) else {
            bail!("stored document `{doc_id}` is not in the corpus");
        };
        let kd = kb.get(doc_id)?;
        if let Err(v) = kd.check_structure() {
            findings += 1;
            rows.push(vec![
                doc_id.to_string(),
                String::new(),
                "structure".into(),
                v.to_string(),
            ]);
        }
        let chunks = chunk_document(doc, kd.record.chunk_policy)?;
        for u in &kd.units {
            let Some(chunk) = chunks.get(u.chunk_index) else {
                findings += 1;
                rows.push(vec![
                    doc_id.to_string(),
                    u.ku_id.clone(),
                    "schema".into(),
                    format!("chunk {} does not exist in the source", u.chunk_index),
                ]);
                continue;
            };
            let report = validate_ku(u, chunk, opts);
            if !report.is_clean() {
                findings += 1;
                let kind = if report.has_errors() {
                    "error"
                } else {
                    "warning"
                };
                rows.push(vec![
                    doc_id.to_string(),
                    u.ku_id.clone(),
                    kind.into(),
                    report.summary(),
                ]);
            }
        }
    }
    let table = csv_string(&["doc_id", "ku_id", "severity", "finding"], &rows)?;
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write(out, "validation.csv", &table)?;
        write_run_json(
            out,
            invocation,
            serde_json::json!({ "guard_n": opts.guard_n.max(3) }),
        )?;
    }
    for r in &rows {
        println!("{}: {}: {}", r[0], r[1], r[3]);
    }
    println!("{findings} finding(s) in {} documents", kb.len());
    Ok(if a.strict && findings > 0 {
        EXIT_FINDINGS
    } else {
        EXIT_OK
    })
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.run_json)
        .with_context(|| format!("reading {}", a.run_json.display()))?;
    let record: RunRecord<serde_json::Value> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.run_json.display()))?;
    if matches!(record.invocation, Command::Replay(_)) {
        bail!("run.json records a replay");
    }
    run(&record.invocation)
}
