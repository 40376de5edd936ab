//! Document ingestion and chunking.
//!
//! Documents arrive as JSONL (one object per line with `doc_id`, `text`,
//! optional `title` and `metadata`). Each document is split into overlapping
//! token windows; the final window is right-anchored at the document end so
//! no token is dropped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tokenizer::split_spans;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate doc_id {doc_id:?}")]
    DuplicateDocId { doc_id: String },
    #[error("chunking: overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    InvalidOverlap { chunk_size: usize, overlap: usize },
    #[error("chunking: chunk_size {chunk_size} is below the minimum of {min}")]
    ChunkSizeTooSmall { chunk_size: usize, min: usize },
}

/// A source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// A token window of a document; the unit stored in the vector index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// `<doc_id>#<ordinal>`.
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
    pub ordinal: usize,
}

impl Chunk {
    /// Doc id encoded in a chunk id (everything before the last `#`).
    pub fn doc_id_of(chunk_id: &str) -> &str {
        match chunk_id.rfind('#') {
            Some(pos) => &chunk_id[..pos],
            None => chunk_id,
        }
    }
}

/// Chunking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            chunk_size: 256,
            overlap: 32,
        }
    }
}

pub const MIN_CHUNK_SIZE: usize = 8;

/// An ordered, immutable set of documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus from documents, enforcing id uniqueness and non-empty
    /// text.
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (i, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: i + 1,
                    reason: "doc_id is empty".to_string(),
                });
            }
            if doc.text.split_whitespace().next().is_none() {
                return Err(CorpusError::MalformedLine {
                    line: i + 1,
                    reason: format!("document {:?} has empty text", doc.doc_id),
                });
            }
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId {
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        Ok(Corpus { documents })
    }

    /// Parses JSONL content; documents keep input order. Errors carry the
    /// 1-based line number.
    pub fn from_jsonl(content: &str) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                    line: line_no,
                    reason: format!("invalid JSON: {e}"),
                })?;
            let obj = value.as_object().ok_or_else(|| CorpusError::MalformedLine {
                line: line_no,
                reason: "expected a JSON object".to_string(),
            })?;
            let doc_id = obj
                .get("doc_id")
                .and_then(|v| v.as_str())
                .ok_or_else(|| CorpusError::MalformedLine {
                    line: line_no,
                    reason: "missing or non-string \"doc_id\"".to_string(),
                })?
                .to_string();
            if doc_id.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: line_no,
                    reason: "empty \"doc_id\"".to_string(),
                });
            }
            let text = obj
                .get("text")
                .and_then(|v| v.as_str())
                .ok_or_else(|| CorpusError::MalformedLine {
                    line: line_no,
                    reason: "missing or non-string \"text\"".to_string(),
                })?
                .to_string();
            if text.split_whitespace().next().is_none() {
                return Err(CorpusError::MalformedLine {
                    line: line_no,
                    reason: "\"text\" is empty".to_string(),
                });
            }
            let title = obj
                .get("title")
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string();
            let mut metadata = BTreeMap::new();
            if let Some(meta) = obj.get("metadata") {
                let meta = meta.as_object().ok_or_else(|| CorpusError::MalformedLine {
                    line: line_no,
                    reason: "\"metadata\" must be an object".to_string(),
                })?;
                for (k, v) in meta {
                    let s = v.as_str().ok_or_else(|| CorpusError::MalformedLine {
                        line: line_no,
                        reason: format!("metadata value for {k:?} must be a string"),
                    })?;
                    metadata.insert(k.clone(), s.to_string());
                }
            }
            if !seen.insert(doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId { doc_id });
            }
            documents.push(Document {
                doc_id,
                title,
                text,
                metadata,
            });
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Chunks every document in corpus order.
    pub fn chunks(&self, params: ChunkParams) -> Result<Vec<Chunk>, CorpusError> {
        let mut out = Vec::new();
        for doc in &self.documents {
            out.extend(chunk_document(doc, params)?);
        }
        Ok(out)
    }
}

/// Splits a document into token windows of at most `chunk_size` tokens with
/// the given overlap. Windows start at multiples of the stride
/// (`chunk_size - overlap`); the final window is right-anchored so the spans
/// cover every token. A document shorter than `chunk_size` yields one chunk.
pub fn chunk_document(doc: &Document, params: ChunkParams) -> Result<Vec<Chunk>, CorpusError> {
    let ChunkParams {
        chunk_size,
        overlap,
    } = params;
    if chunk_size < MIN_CHUNK_SIZE {
        return Err(CorpusError::ChunkSizeTooSmall {
            chunk_size,
            min: MIN_CHUNK_SIZE,
        });
    }
    if overlap >= chunk_size {
        return Err(CorpusError::InvalidOverlap {
            chunk_size,
            overlap,
        });
    }
    let spans = split_spans(&doc.text);
    let len = spans.len();
    let mut windows: Vec<(usize, usize)> = Vec::new();
    if len <= chunk_size {
        windows.push((0, len));
    } else {
        let stride = chunk_size - overlap;
        let mut start = 0;
        loop {
            let end = start + chunk_size;
            if end >= len {
                windows.push((len - chunk_size, len));
                break;
            }
            windows.push((start, end));
            start += stride;
        }
    }
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(ordinal, (token_start, token_end))| {
            let byte_start = spans[token_start].1.start;
            let byte_end = spans[token_end - 1].1.end;
            Chunk {
                chunk_id: format!("{}#{}", doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                text: doc.text[byte_start..byte_end].to_string(),
                token_start,
                token_end,
                ordinal,
            }
        })
        .collect())
}
