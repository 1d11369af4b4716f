//! File-backed store of Knowledge Unit documents.
//!
//! A store is a directory:
//!
//! - `kb.jsonl`: one compact [`KuDocument`] per line, append-only.
//! - `kb.idx`: one line per document with its byte offset and duplicate flag.
//! - `kb.ent`: one line per (normalized entity name, document, chunk).
//! - `MANIFEST`: store format, schema and hash versions.
//!
//! The sidecar files are derived data: [`scan`] rebuilds them from
//! `kb.jsonl` alone and must agree with the incrementally written state.
//! One writer at a time holds an exclusive lock on `kb.lock`; readers do not
//! lock.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ku_model::{
    parse_ku_document, serialize_ku_document, Entity, KuDocument, KuLookup, SchemaViolation,
    KU_SCHEMA_VERSION,
};
use crate::provenance::{DEFAULT_MINHASH_SEED, MINHASH_VERSION};

pub const STORE_FORMAT: &str = "alexandria-kb/1";
/// Sentence-hash overlap at or above which an ingest is flagged.
pub const DUPLICATE_THRESHOLD: f64 = 0.9;

const DATA_FILE: &str = "kb.jsonl";
const INDEX_FILE: &str = "kb.idx";
const ENTITY_FILE: &str = "kb.ent";
const MANIFEST_FILE: &str = "MANIFEST";
const LOCK_FILE: &str = "kb.lock";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("document `{0}` is already stored")]
    DuplicateDocId(String),
    #[error("document `{0}` not found")]
    NotFound(String),
    #[error("invalid document: {0}")]
    Invalid(#[from] SchemaViolation),
    #[error("store {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbError + '_ {
    move |source| KbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub ku_schema: String,
    pub minhash_version: String,
    pub minhash_seed: u64,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            format: STORE_FORMAT.into(),
            ku_schema: KU_SCHEMA_VERSION.into(),
            minhash_version: MINHASH_VERSION.into(),
            minhash_seed: DEFAULT_MINHASH_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub offset: u64,
    pub length: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
    pub max_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EntityLine {
    name: String,
    doc_id: String,
    chunk_index: usize,
}

/// Document and entity indices; derivable from `kb.jsonl` by [`scan`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KbIndex {
    pub docs: Vec<IndexEntry>,
    pub entities: BTreeMap<String, Vec<(String, usize)>>,
}

/// Outcome of a successful [`KnowledgeBase::put`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResult {
    pub doc_id: String,
    /// Set when the document looks like a near-duplicate of a stored one.
    pub duplicate_suspect_of: Option<String>,
    pub max_overlap: f64,
}

/// Lowercase with internal whitespace collapsed.
pub fn normalize_entity_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn hash_set(kd: &KuDocument) -> HashSet<u32> {
    kd.units
        .iter()
        .flat_map(|u| u.sentence_minhashes.iter().copied())
        .collect()
}

/// Fraction of `new`'s distinct sentence hashes present in `old`.
pub fn hash_overlap(new: &HashSet<u32>, old: &HashSet<u32>) -> f64 {
    if new.is_empty() {
        return 0.0;
    }
    new.iter().filter(|h| old.contains(h)).count() as f64 / new.len() as f64
}

/// Incremental state shared by ingest and rebuild, so both compute
/// duplicate flags identically.
#[derive(Default)]
struct Builder {
    index: KbIndex,
    hashes: Vec<(String, HashSet<u32>)>,
    /// `kb.ent` lines in insertion order.
    entity_lines: Vec<EntityLine>,
}

impl Builder {
    fn contains(&self, doc_id: &str) -> bool {
        self.hashes.iter().any(|(d, _)| d == doc_id)
    }

    fn add(&mut self, kd: &KuDocument, offset: u64, length: u64) -> (IndexEntry, Vec<EntityLine>) {
        let hs = hash_set(kd);
        let mut best: Option<(&str, f64)> = None;
        for (doc, old) in &self.hashes {
            let o = hash_overlap(&hs, old);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((doc, o));
            }
        }
        let max_overlap = best.map_or(0.0, |(_, o)| o);
        let duplicate_of = best
            .filter(|(_, o)| *o >= DUPLICATE_THRESHOLD)
            .map(|(d, _)| d.to_string());
        let entry = IndexEntry {
            doc_id: kd.doc_id.clone(),
            offset,
            length,
            duplicate_of,
            max_overlap,
        };
        let mut lines = Vec::new();
        for u in &kd.units {
            for e in &u.entities {
                let line = EntityLine {
                    name: normalize_entity_name(&e.name),
                    doc_id: kd.doc_id.clone(),
                    chunk_index: u.chunk_index,
                };
                let slot = self.index.entities.entry(line.name.clone()).or_default();
                let key = (line.doc_id.clone(), line.chunk_index);
                if !slot.contains(&key) {
                    slot.push(key);
                    lines.push(line);
                }
            }
        }
        self.index.docs.push(entry.clone());
        self.hashes.push((kd.doc_id.clone(), hs));
        self.entity_lines.extend(lines.iter().cloned());
        (entry, lines)
    }
}

/// Rebuilds indices by reading every record of `kb.jsonl`.
pub fn scan(dir: &Path) -> Result<KbIndex, KbError> {
    Ok(scan_builder(dir)?.index)
}

fn scan_builder(dir: &Path) -> Result<Builder, KbError> {
    let path = dir.join(DATA_FILE);
    let mut b = Builder::default();
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(b),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line).map_err(io_err(&path))?;
        if n == 0 {
            break;
        }
        if line.last() != Some(&b'\n') {
            return Err(KbError::CorruptStore(format!(
                "truncated record at byte {offset}"
            )));
        }
        let kd = parse_ku_document(&line[..n - 1])
            .map_err(|e| KbError::CorruptStore(format!("record at byte {offset}: {e}")))?;
        if b.contains(&kd.doc_id) {
            return Err(KbError::CorruptStore(format!(
                "doc_id `{}` stored twice",
                kd.doc_id
            )));
        }
        b.add(&kd, offset, (n - 1) as u64);
        offset += n as u64;
    }
    Ok(b)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<Vec<T>>, KbError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let v = serde_json::from_str(line).map_err(|e| {
            KbError::CorruptStore(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(v);
    }
    Ok(Some(out))
}

pub struct KnowledgeBase {
    dir: PathBuf,
    builder: Builder,
    // Held for the lifetime of a writer; dropping it releases the lock.
    lock: Option<File>,
}

impl KnowledgeBase {
    /// Opens an existing store for reading. Missing sidecars are rebuilt in
    /// memory from `kb.jsonl`.
    pub fn open(dir: &Path) -> Result<KnowledgeBase, KbError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(
            &fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?,
        )
        .map_err(|e| KbError::CorruptStore(format!("MANIFEST: {e}")))?;
        if manifest.format != STORE_FORMAT {
            return Err(KbError::CorruptStore(format!(
                "unsupported store format `{}`",
                manifest.format
            )));
        }
        let builder = Self::load(dir)?;
        Ok(KnowledgeBase {
            dir: dir.to_path_buf(),
            builder,
            lock: None,
        })
    }

    /// Opens or creates a store for writing and takes the writer lock.
    pub fn open_writer(dir: &Path) -> Result<KnowledgeBase, KbError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock_path = dir.join(LOCK_FILE);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(KbError::Locked(dir.to_path_buf())),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            let text =
                serde_json::to_string_pretty(&Manifest::default()).expect("manifest serializes");
            fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
        }
        let mut kb = Self::open(dir)?;
        kb.lock = Some(lock);
        // Sidecars may lag behind the data file after a crash; rewrite them
        // from the loaded state so later appends extend a consistent file.
        kb.write_sidecars()?;
        Ok(kb)
    }

    fn load(dir: &Path) -> Result<Builder, KbError> {
        let scanned = scan_builder(dir)?;
        let idx: Option<Vec<IndexEntry>> = read_jsonl(&dir.join(INDEX_FILE))?;
        let ent: Option<Vec<EntityLine>> = read_jsonl(&dir.join(ENTITY_FILE))?;
        if let (Some(idx), Some(ent)) = (idx, ent) {
            let mut entities: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
            for e in ent {
                entities
                    .entry(e.name)
                    .or_default()
                    .push((e.doc_id, e.chunk_index));
            }
            let stored = KbIndex {
                docs: idx,
                entities,
            };
            if stored.docs.len() > scanned.index.docs.len() {
                return Err(KbError::CorruptStore(
                    "index lists documents missing from kb.jsonl".into(),
                ));
            }
            if stored != scanned.index && stored.docs.len() == scanned.index.docs.len() {
                return Err(KbError::CorruptStore(
                    "sidecar indices disagree with kb.jsonl".into(),
                ));
            }
        }
        Ok(scanned)
    }

    fn write_sidecars(&self) -> Result<(), KbError> {
        let mut idx = String::new();
        for e in &self.builder.index.docs {
            idx.push_str(&serde_json::to_string(e).expect("index entry serializes"));
            idx.push('\n');
        }
        let mut ent = String::new();
        for line in &self.builder.entity_lines {
            ent.push_str(&serde_json::to_string(line).expect("entity line serializes"));
            ent.push('\n');
        }
        for (file, text) in [(INDEX_FILE, idx), (ENTITY_FILE, ent)] {
            let p = self.dir.join(file);
            fs::write(&p, text).map_err(io_err(&p))?;
        }
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn index(&self) -> &KbIndex {
        &self.builder.index
    }

    pub fn len(&self) -> usize {
        self.builder.index.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.builder
            .index
            .docs
            .iter()
            .map(|e| e.doc_id.as_str())
            .collect()
    }

    pub fn entry(&self, doc_id: &str) -> Option<&IndexEntry> {
        self.builder.index.docs.iter().find(|e| e.doc_id == doc_id)
    }

    /// Appends a document. Exact `doc_id` collisions are rejected; documents
    /// whose sentence hashes largely match a stored one are stored with a
    /// duplicate flag.
    pub fn put(&mut self, kd: &KuDocument) -> Result<IngestResult, KbError> {
        if self.lock.is_none() {
            return Err(KbError::ReadOnly);
        }
        kd.check_structure()?;
        if self.builder.contains(&kd.doc_id) {
            return Err(KbError::DuplicateDocId(kd.doc_id.clone()));
        }
        let data_path = self.dir.join(DATA_FILE);
        let mut data = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&data_path)
            .map_err(io_err(&data_path))?;
        let offset = data.seek(SeekFrom::End(0)).map_err(io_err(&data_path))?;
        let mut line = serialize_ku_document(kd);
        let length = line.len() as u64;
        line.push(b'\n');
        data.write_all(&line).map_err(io_err(&data_path))?;
        data.flush().map_err(io_err(&data_path))?;

        let (entry, entity_lines) = self.builder.add(kd, offset, length);
        let mut idx_text = serde_json::to_string(&entry).expect("index entry serializes");
        idx_text.push('\n');
        let mut ent_text = String::new();
        for l in &entity_lines {
            ent_text.push_str(&serde_json::to_string(l).expect("entity line serializes"));
            ent_text.push('\n');
        }
        for (file, text) in [(INDEX_FILE, idx_text), (ENTITY_FILE, ent_text)] {
            let p = self.dir.join(file);
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&p)
                .map_err(io_err(&p))?;
            f.write_all(text.as_bytes()).map_err(io_err(&p))?;
        }
        Ok(IngestResult {
            doc_id: kd.doc_id.clone(),
            duplicate_suspect_of: entry.duplicate_of,
            max_overlap: entry.max_overlap,
        })
    }

    pub fn get(&self, doc_id: &str) -> Result<KuDocument, KbError> {
        let entry = self
            .entry(doc_id)
            .ok_or_else(|| KbError::NotFound(doc_id.to_string()))?;
        let path = self.dir.join(DATA_FILE);
        let mut f = File::open(&path).map_err(io_err(&path))?;
        f.seek(SeekFrom::Start(entry.offset))
            .map_err(io_err(&path))?;
        let mut buf = vec![0u8; entry.length as usize];
        f.read_exact(&mut buf)
            .map_err(|e| KbError::CorruptStore(format!("record for `{doc_id}`: {e}")))?;
        let kd = parse_ku_document(&buf)
            .map_err(|e| KbError::CorruptStore(format!("record for `{doc_id}`: {e}")))?;
        if kd.doc_id != doc_id {
            return Err(KbError::CorruptStore(format!(
                "index entry for `{doc_id}` points at `{}`",
                kd.doc_id
            )));
        }
        Ok(kd)
    }

    /// Every stored document, in ingest order.
    pub fn documents(&self) -> Result<Vec<KuDocument>, KbError> {
        self.doc_ids().into_iter().map(|d| self.get(d)).collect()
    }

    /// Entities whose normalized name equals the normalized `name`.
    pub fn query_entity(&self, name: &str) -> Result<Vec<(String, usize, Entity)>, KbError> {
        let key = normalize_entity_name(name);
        let Some(refs) = self.builder.index.entities.get(&key) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let mut cache: BTreeMap<&str, KuDocument> = BTreeMap::new();
        for (doc_id, chunk_index) in refs {
            if !cache.contains_key(doc_id.as_str()) {
                cache.insert(doc_id, self.get(doc_id)?);
            }
            let kd = &cache[doc_id.as_str()];
            let unit = kd
                .units
                .iter()
                .find(|u| u.chunk_index == *chunk_index)
                .ok_or_else(|| {
                    KbError::CorruptStore(format!(
                        "entity index points at missing unit {doc_id}#{chunk_index}"
                    ))
                })?;
            for e in unit
                .entities
                .iter()
                .filter(|e| normalize_entity_name(&e.name) == key)
            {
                out.push((doc_id.clone(), *chunk_index, e.clone()));
            }
        }
        Ok(out)
    }
}

impl KuLookup for KnowledgeBase {
    fn lookup(&self, doc_id: &str) -> Option<KuDocument> {
        self.get(doc_id).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_names_normalize() {
        assert_eq!(
            normalize_entity_name("  Earth-Moon   System "),
            "earth-moon system"
        );
    }

    #[test]
    fn overlap_fraction() {
        let a: HashSet<u32> = [1, 2, 3, 4].into();
        let b: HashSet<u32> = [1, 2, 3, 9].into();
        assert_eq!(hash_overlap(&a, &b), 0.75);
        assert_eq!(hash_overlap(&HashSet::new(), &b), 0.0);
    }
}
