//! Knowledge Unit toolkit.
//!
//! Converts scholarly text into style-free structured records ("Knowledge
//! Units"): entities with attributes and relations, a short context summary,
//! and one MinHash per source sentence for provenance. Around that data model
//! sit the evaluation protocols used to check that the conversion keeps facts
//! and drops wording:
//!
//! - [`mcq_eval`]: multiple-choice retention under no-context, original-text
//!   and Knowledge-Unit conditions.
//! - [`overlap_analysis`]: n-gram Jaccard and fingerprint plagiarism scores
//!   between sources and their Knowledge Units or reconstructions.
//! - [`embed_baseline`]: cosine-similarity controls showing what embeddings
//!   can and cannot tell apart.
//!
//! Model access goes through [`llm_gateway`], which also ships a deterministic
//! mock provider so every pipeline runs offline and byte-reproducibly.

pub mod corpus;
pub mod embed_baseline;
pub mod extraction;
pub mod kb_store;
pub mod ku_model;
pub mod llm_gateway;
pub mod mcq_eval;
pub mod overlap_analysis;
pub mod par;
pub mod prompts;
pub mod provenance;
pub mod seed;
pub mod vocab;

pub use corpus::{Chunk, ChunkPolicy, Document, DomainTag, Sentence};
pub use ku_model::{DocumentHeader, Entity, FieldValue, KnowledgeUnit, KuDocument};
pub use llm_gateway::{Gateway, GenerationRequest, ProviderConfig};
pub use mcq_eval::{EvalCondition, EvalReport, Mcq};
pub use overlap_analysis::{OverlapPair, OverlapReport};
pub use provenance::{MinHashSignature, SentenceHash, Shingle, MINHASH_VERSION};
