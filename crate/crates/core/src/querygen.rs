//! Synthetic query generation and query-set diversity measurement.
//!
//! Each chunk yields a fixed number of generated queries; a query remembers
//! its source chunk, and that pair is the positive training example for the
//! encoder. Diversity is the mean per-query token entropy; a
//! distinct-bigram ratio is exposed alongside it as a clearly separate
//! signal, since mean entropy is invariant under duplicating queries.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::textgen::{GenError, GenRequest, TextGenerator, PASSAGE_MARKER};
use crate::tokenizer::split_surfaces;

#[derive(Debug, thiserror::Error)]
pub enum QuerygenError {
    #[error("query {query_id:?} has no tokens")]
    EmptyQuery { query_id: String },
    #[error("cannot measure diversity of an empty query set")]
    EmptySet,
    #[error("backend failed at chunk ordinal {resume_cursor}: {source}")]
    Backend {
        /// Ordinal of the first chunk whose queries are incomplete; resume
        /// generation from here after fixing the backend.
        resume_cursor: usize,
        /// Queries completed before the failure, in canonical order.
        partial: Vec<SyntheticQuery>,
        source: GenError,
    },
}

/// Where a query came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// A real user query, wrapped into the same record shape.
    Real,
    /// Generated by a hosted model.
    Llm,
    /// Generated by the offline template backend.
    Template,
}

impl Provenance {
    pub fn from_backend_kind(kind: &str) -> Provenance {
        match kind {
            "template" => Provenance::Template,
            _ => Provenance::Llm,
        }
    }
}

/// A query paired with the chunk it was generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub query_id: String,
    pub text: String,
    pub source_chunk_id: String,
    pub provenance: Provenance,
}

/// System prompt handed to generation backends.
pub const QUERYGEN_SYSTEM_PROMPT: &str =
    "You write exactly one short question that is answerable from the passage you are given. \
     Reply with the question only.";

/// Builds the generation request for one chunk.
pub fn query_request(chunk: &Chunk, seed: u64) -> GenRequest {
    GenRequest {
        system_prompt: QUERYGEN_SYSTEM_PROMPT.to_string(),
        user_prompt: format!(
            "Ask one question a reader of this passage could answer.{PASSAGE_MARKER}{}",
            chunk.text
        ),
        max_tokens: 64,
        temperature: 0.0,
        seed,
    }
}

/// Generates `n_per_chunk` queries for every chunk, in canonical
/// (chunk ordinal, query ordinal) order. On backend failure the completed
/// prefix and a resume cursor are returned inside the error.
pub fn generate_queries(
    chunks: &[Chunk],
    backend: &dyn TextGenerator,
    n_per_chunk: usize,
    seed: u64,
) -> Result<Vec<SyntheticQuery>, QuerygenError> {
    assert!(n_per_chunk >= 1, "n_per_chunk must be at least 1");
    let provenance = Provenance::from_backend_kind(backend.kind());
    let mut out = Vec::with_capacity(chunks.len() * n_per_chunk);
    for (c_idx, chunk) in chunks.iter().enumerate() {
        for q_idx in 0..n_per_chunk {
            let req = query_request(chunk, crate::rng::mix(seed, &[c_idx as u64, q_idx as u64]));
            let text = match backend.generate(&req) {
                Ok(t) => t,
                Err(source) => {
                    // Drop queries of the failing chunk so the cursor is a
                    // clean chunk boundary.
                    out.truncate(c_idx * n_per_chunk);
                    return Err(QuerygenError::Backend {
                        resume_cursor: c_idx,
                        partial: out,
                        source,
                    });
                }
            };
            out.push(SyntheticQuery {
                query_id: format!("{}::q{}", chunk.chunk_id, q_idx),
                text,
                source_chunk_id: chunk.chunk_id.clone(),
                provenance,
            });
        }
    }
    Ok(out)
}

/// Shannon entropy (bits) of the unigram token distribution of a text.
pub fn entropy_of_text(text: &str) -> Option<f64> {
    let surfaces = split_surfaces(text);
    if surfaces.is_empty() {
        return None;
    }
    let mut counts: alloc::collections::BTreeMap<String, u64> = alloc::collections::BTreeMap::new();
    for s in surfaces.iter() {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let n = surfaces.len() as f64;
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        h -= p * libm::log2(p);
    }
    Some(h)
}

/// Token entropy of one query, in bits.
pub fn query_entropy(query: &SyntheticQuery) -> Result<f64, QuerygenError> {
    entropy_of_text(&query.text).ok_or_else(|| QuerygenError::EmptyQuery {
        query_id: query.query_id.clone(),
    })
}

/// Mean per-query entropy over a query set.
pub fn diversity(queries: &[SyntheticQuery]) -> Result<f64, QuerygenError> {
    if queries.is_empty() {
        return Err(QuerygenError::EmptySet);
    }
    let mut sum = 0.0;
    for q in queries {
        sum += query_entropy(q)?;
    }
    Ok(sum / queries.len() as f64)
}

/// Auxiliary diversity signal: distinct token bigrams over total bigrams,
/// pooled across the whole set. Unlike mean entropy this drops when queries
/// repeat each other. A set with no bigrams scores 1.
pub fn distinct_bigram_ratio(queries: &[SyntheticQuery]) -> Result<f64, QuerygenError> {
    if queries.is_empty() {
        return Err(QuerygenError::EmptySet);
    }
    let mut total = 0u64;
    let mut distinct: alloc::collections::BTreeSet<(String, String)> =
        alloc::collections::BTreeSet::new();
    for q in queries {
        let toks = split_surfaces(&q.text);
        for pair in toks.windows(2) {
            total += 1;
            distinct.insert((pair[0].clone(), pair[1].clone()));
        }
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(distinct.len() as f64 / total as f64)
}
