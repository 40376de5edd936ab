//! Exact dense retrieval over chunk embeddings.
//!
//! The index is a flat ordered list of `(chunk_id, unit vector)` entries.
//! Search is an exhaustive dot-product scan with ties broken by ascending
//! chunk id, so results are reproducible and equal to a full-sort oracle by
//! construction. Vectors are stored at full f64 width; the `TIDX` container
//! keeps them exact.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::container::{
    read_container, write_container, Checkpoint, ContainerError, INDEX_MAGIC,
};
use crate::corpus::Chunk;
use crate::encoder::{encode_document, EncoderError};
use crate::summarizer::{contextualize_chunk, Summary, SummarizerError};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("query vector has dim {got}, index has dim {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("no summary available for document {doc_id:?}")]
    MissingSummary { doc_id: String },
    #[error(
        "index was built with encoder {indexed}, queried with {supplied}; \
         pass allow_mismatch to serve anyway"
    )]
    FingerprintMismatch { indexed: String, supplied: String },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
}

/// An immutable dense index over chunk embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(String, Vec<f64>)>,
    fingerprint: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    kind: String,
    dim: usize,
    fingerprint: String,
    chunk_ids: Vec<String>,
}

impl VectorIndex {
    pub fn new(dim: usize, fingerprint: String) -> Self {
        VectorIndex {
            dim,
            entries: Vec::new(),
            fingerprint,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn entries(&self) -> &[(String, Vec<f64>)] {
        &self.entries
    }

    pub fn push(&mut self, chunk_id: String, vector: Vec<f64>) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        self.entries.push((chunk_id, vector));
        Ok(())
    }

    /// The `k` entries with the highest dot product against `query`, sorted
    /// by descending score with ties broken by ascending chunk id. A `k`
    /// beyond the index size returns every entry.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>, IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let mut scored: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|(id, v)| (id.as_str(), crate::tensor::dot(query, v)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores of finite vectors are comparable")
                .then_with(|| a.0.cmp(b.0))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(id, s)| (id.to_string(), s))
            .collect())
    }

    /// Refuses to serve an index built by a different encoder.
    pub fn verify_fingerprint(
        &self,
        checkpoint: &Checkpoint,
        allow_mismatch: bool,
    ) -> Result<(), IndexError> {
        let supplied = checkpoint.fingerprint();
        if supplied != self.fingerprint && !allow_mismatch {
            return Err(IndexError::FingerprintMismatch {
                indexed: self.fingerprint.clone(),
                supplied,
            });
        }
        Ok(())
    }

    /// Serializes to the `TIDX` container (vectors at full f64 width).
    pub fn encode(&self) -> Vec<u8> {
        let header = IndexHeader {
            kind: "index".to_string(),
            dim: self.dim,
            fingerprint: self.fingerprint.clone(),
            chunk_ids: self.entries.iter().map(|(id, _)| id.clone()).collect(),
        };
        let header_bytes =
            serde_json::to_vec(&header).expect("index header serialization cannot fail");
        let mut payload = Vec::with_capacity(self.entries.len() * self.dim * 8);
        for (_, v) in &self.entries {
            for &x in v {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_container(INDEX_MAGIC, &header_bytes, &payload)
    }

    /// Parses a `TIDX` container.
    pub fn decode(bytes: &[u8]) -> Result<Self, IndexError> {
        let (header_bytes, payload) = read_container(INDEX_MAGIC, bytes)?;
        let header: IndexHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        if header.kind != "index" {
            return Err(ContainerError::Header(alloc::format!(
                "expected kind \"index\", found {:?}",
                header.kind
            ))
            .into());
        }
        let expected = header.chunk_ids.len() * header.dim * 8;
        if payload.len() != expected {
            return Err(ContainerError::Truncated { context: "index vectors" }.into());
        }
        let mut entries = Vec::with_capacity(header.chunk_ids.len());
        for (i, id) in header.chunk_ids.into_iter().enumerate() {
            let mut v = Vec::with_capacity(header.dim);
            for j in 0..header.dim {
                let at = (i * header.dim + j) * 8;
                let raw: [u8; 8] = payload[at..at + 8].try_into().expect("length checked");
                v.push(f64::from_le_bytes(raw));
            }
            entries.push((id, v));
        }
        Ok(VectorIndex {
            dim: header.dim,
            entries,
            fingerprint: header.fingerprint,
        })
    }
}

/// Embeds every chunk (optionally prefixed with its document summary) in
/// corpus order. Prompts are applied iff the checkpoint is prompt-tuned.
pub fn build_index(
    chunks: &[Chunk],
    summaries: Option<&[Summary]>,
    checkpoint: &Checkpoint,
    use_summaries: bool,
) -> Result<VectorIndex, IndexError> {
    let mut index = VectorIndex::new(checkpoint.model.config().dim, checkpoint.fingerprint());
    let by_doc: alloc::collections::BTreeMap<&str, &Summary> = summaries
        .unwrap_or(&[])
        .iter()
        .map(|s| (s.doc_id.as_str(), s))
        .collect();
    for chunk in chunks {
        let text = if use_summaries {
            let summary = by_doc
                .get(chunk.doc_id.as_str())
                .ok_or_else(|| IndexError::MissingSummary {
                    doc_id: chunk.doc_id.clone(),
                })?;
            contextualize_chunk(chunk, summary)?
        } else {
            chunk.text.clone()
        };
        let ids = checkpoint.vocab.encode(&text);
        let vector = encode_document(
            &ids,
            &checkpoint.model,
            &checkpoint.prompts,
            checkpoint.prompt_tuned,
        )?;
        index.push(chunk.chunk_id.clone(), vector)?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::rng;
    use crate::tensor::l2_norm;
    use crate::tokenizer::Vocab;

    fn unit_vector(dim: usize, rng: &mut rng::Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..dim).map(|_| rng::gaussian(rng)).collect();
        let n = l2_norm(&v);
        for x in &mut v {
            *x /= n;
        }
        v
    }

    fn random_index(n: usize, dim: usize, seed: u64) -> VectorIndex {
        let mut rng = rng::substream(seed, &[0x1d8]);
        let mut index = VectorIndex::new(dim, "test-fingerprint".to_string());
        for i in 0..n {
            index
                .push(alloc::format!("c{i:04}"), unit_vector(dim, &mut rng))
                .unwrap();
        }
        index
    }

    /// Independent oracle: score everything, full sort, truncate.
    fn linear_scan_oracle(
        index: &VectorIndex,
        query: &[f64],
        k: usize,
    ) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = index
            .entries()
            .iter()
            .map(|(id, v)| {
                let mut s = 0.0;
                for (a, b) in query.iter().zip(v) {
                    s += a * b;
                }
                (id.clone(), s)
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn search_matches_linear_scan_oracle() {
        let index = random_index(200, 12, 5);
        let mut rng = rng::substream(6, &[]);
        for _ in 0..50 {
            let q = unit_vector(12, &mut rng);
            for k in [1, 7, 10] {
                assert_eq!(index.search(&q, k).unwrap(), linear_scan_oracle(&index, &q, k));
            }
        }
    }

    #[test]
    fn oversized_k_returns_everything_sorted() {
        let index = random_index(9, 6, 8);
        let mut rng = rng::substream(9, &[]);
        let q = unit_vector(6, &mut rng);
        let hits = index.search(&q, 100).unwrap();
        assert_eq!(hits.len(), 9);
        for w in hits.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn stored_vector_query_scores_one() {
        let index = random_index(20, 8, 11);
        let (id, v) = index.entries()[7].clone();
        let hits = index.search(&v, 3).unwrap();
        assert_eq!(hits[0].0, id);
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prefix_consistency() {
        let index = random_index(50, 8, 13);
        let mut rng = rng::substream(14, &[]);
        let q = unit_vector(8, &mut rng);
        let full = index.search(&q, 50).unwrap();
        for k in [1usize, 5, 20, 50] {
            assert_eq!(index.search(&q, k).unwrap(), full[..k].to_vec());
        }
    }

    #[test]
    fn ties_break_by_ascending_chunk_id() {
        let mut index = VectorIndex::new(2, String::new());
        index.push("b".into(), alloc::vec![1.0, 0.0]).unwrap();
        index.push("a".into(), alloc::vec![1.0, 0.0]).unwrap();
        index.push("c".into(), alloc::vec![0.0, 1.0]).unwrap();
        let hits = index.search(&[1.0, 0.0], 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let index = random_index(3, 4, 2);
        assert!(matches!(
            index.search(&[1.0, 0.0], 1),
            Err(IndexError::DimMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn container_round_trip_is_exact() {
        let index = random_index(17, 6, 21);
        let bytes = index.encode();
        let loaded = VectorIndex::decode(&bytes).unwrap();
        assert_eq!(index, loaded);
        assert_eq!(bytes, loaded.encode());
        // Empty index round-trips too.
        let empty = VectorIndex::new(4, "f".to_string());
        assert_eq!(VectorIndex::decode(&empty.encode()).unwrap(), empty);
    }

    #[test]
    fn corrupt_index_bytes_are_rejected() {
        let bytes = random_index(3, 4, 1).encode();
        assert!(VectorIndex::decode(&bytes[..bytes.len() - 5]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            VectorIndex::decode(&bad),
            Err(IndexError::Container(ContainerError::BadMagic { .. }))
        ));
    }

    fn tiny_checkpoint() -> Checkpoint {
        let config = EncoderConfig {
            dim: 16,
            vocab_size: 64,
            layers: 1,
            heads: 2,
            max_seq: 16,
            prompt_len: 2,
            temperature: 0.05,
            seed: 7,
            shared_base: true,
        };
        Checkpoint::init(config, Vocab::from_texts(["reset clock pll gate"], 64)).unwrap()
    }

    fn two_chunks() -> Vec<Chunk> {
        alloc::vec![
            Chunk {
                chunk_id: "d#0".into(),
                doc_id: "d".into(),
                text: "reset clock".into(),
                token_start: 0,
                token_end: 2,
                ordinal: 0,
            },
            Chunk {
                chunk_id: "d#1".into(),
                doc_id: "d".into(),
                text: "pll gate".into(),
                token_start: 2,
                token_end: 4,
                ordinal: 1,
            },
        ]
    }

    #[test]
    fn build_embeds_chunks_in_order_with_unit_norm() {
        let ckpt = tiny_checkpoint();
        let index = build_index(&two_chunks(), None, &ckpt, false).unwrap();
        assert_eq!(index.len(), 2);
        assert_eq!(index.entries()[0].0, "d#0");
        for (_, v) in index.entries() {
            assert!((l2_norm(v) - 1.0).abs() < 1e-9);
        }
        assert_eq!(index.fingerprint(), ckpt.fingerprint());
        // Deterministic rebuild.
        let again = build_index(&two_chunks(), None, &ckpt, false).unwrap();
        assert_eq!(index.encode(), again.encode());
    }

    #[test]
    fn summary_mode_requires_summaries() {
        let ckpt = tiny_checkpoint();
        let err = build_index(&two_chunks(), Some(&[]), &ckpt, true).unwrap_err();
        match err {
            IndexError::MissingSummary { doc_id } => assert_eq!(doc_id, "d"),
            other => panic!("expected MissingSummary, got {other:?}"),
        }
        let summaries = alloc::vec![Summary {
            doc_id: "d".into(),
            selected: alloc::vec![0],
            text: "reset clock pll gate".into(),
            weights: alloc::vec![1.0],
        }];
        let with = build_index(&two_chunks(), Some(&summaries), &ckpt, true).unwrap();
        let without = build_index(&two_chunks(), None, &ckpt, false).unwrap();
        assert_ne!(with.entries()[0].1, without.entries()[0].1);
    }

    #[test]
    fn fingerprint_verification_gates_serving() {
        let ckpt = tiny_checkpoint();
        let index = build_index(&two_chunks(), None, &ckpt, false).unwrap();
        assert!(index.verify_fingerprint(&ckpt, false).is_ok());
        let mut other = ckpt.clone();
        other.prompts.prompt_q.data[0] += 1.0;
        assert!(matches!(
            index.verify_fingerprint(&other, false),
            Err(IndexError::FingerprintMismatch { .. })
        ));
        assert!(index.verify_fingerprint(&other, true).is_ok());
    }
}
