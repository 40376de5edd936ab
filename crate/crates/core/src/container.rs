//! Binary containers for trained artifacts.
//!
//! Layout shared by checkpoints and indexes: a 4-byte magic, a `u32`
//! little-endian format version, a `u64` little-endian header length, a JSON
//! header, then a raw payload. Checkpoints (`TEMB`) store every tensor as
//! little-endian IEEE-754 float32 in header order; since parameters are kept
//! f32-representable in memory, a save/load round trip reproduces each
//! tensor bit for bit.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{EncoderConfig, EncoderError, EncoderModel, SoftPrompt, PROMPT_D, PROMPT_Q};
use crate::rng;
use crate::summarizer::SummaryWeights;
use crate::tensor::Tensor;
use crate::tokenizer::Vocab;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TEMB";
pub const INDEX_MAGIC: [u8; 4] = *b"TIDX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0} (supported: {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("container truncated while reading {context}")]
    Truncated { context: &'static str },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("checkpoint has dim {actual} but dim {requested} was requested")]
    DimMismatch { requested: usize, actual: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

pub(crate) fn write_container(magic: [u8; 4], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

pub(crate) fn read_container<'a>(
    magic: [u8; 4],
    bytes: &'a [u8],
) -> Result<(&'a [u8], &'a [u8]), ContainerError> {
    if bytes.len() < 16 {
        return Err(ContainerError::Truncated { context: "preamble" });
    }
    if bytes[0..4] != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(&magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[0..4]).into_owned(),
        });
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes([
        bytes[8], bytes[9], bytes[10], bytes[11], bytes[12], bytes[13], bytes[14], bytes[15],
    ]) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .ok_or(ContainerError::Truncated { context: "header length" })?;
    if bytes.len() < header_end {
        return Err(ContainerError::Truncated { context: "header" });
    }
    Ok((&bytes[16..header_end], &bytes[header_end..]))
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorDescriptor {
    section: String,
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    config: EncoderConfig,
    prompt_tuned: bool,
    vocab: Vocab,
    tensors: Vec<TensorDescriptor>,
}

/// A complete trained state: encoder base, soft prompts, optional
/// summarizer weights, the vocabulary, and whether prompt tuning ran.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub prompts: SoftPrompt,
    pub summarizer: Option<SummaryWeights>,
    pub vocab: Vocab,
    pub prompt_tuned: bool,
}

impl Checkpoint {
    /// Seeded fresh state for a config and vocabulary.
    pub fn init(config: EncoderConfig, vocab: Vocab) -> Result<Self, EncoderError> {
        let mut prompt_rng = rng::substream(config.seed, &[0x70726d70]);
        let model = EncoderModel::init(config.clone())?;
        let prompts = SoftPrompt::init(&config, &mut prompt_rng);
        Ok(Checkpoint {
            model,
            prompts,
            summarizer: None,
            vocab,
            prompt_tuned: false,
        })
    }

    fn ordered_tensors(&self) -> Vec<(String, String, &Tensor)> {
        let mut out: Vec<(String, String, &Tensor)> = self
            .model
            .params()
            .iter()
            .map(|(name, t)| ("base".to_string(), name.clone(), t))
            .collect();
        out.push(("prompt_q".to_string(), PROMPT_Q.to_string(), &self.prompts.prompt_q));
        out.push(("prompt_d".to_string(), PROMPT_D.to_string(), &self.prompts.prompt_d));
        if let Some(s) = &self.summarizer {
            out.push(("summarizer".to_string(), "summarizer.w".to_string(), &s.w));
            out.push(("summarizer".to_string(), "summarizer.u".to_string(), &s.u));
        }
        out
    }

    /// Serializes to the `TEMB` container.
    pub fn encode(&self) -> Vec<u8> {
        let tensors = self.ordered_tensors();
        let descriptors: Vec<TensorDescriptor> = tensors
            .iter()
            .map(|(section, name, t)| TensorDescriptor {
                section: section.clone(),
                name: name.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect();
        let header = CheckpointHeader {
            kind: "checkpoint".to_string(),
            config: self.model.config().clone(),
            prompt_tuned: self.prompt_tuned,
            vocab: self.vocab.clone(),
            tensors: descriptors,
        };
        let header_bytes =
            serde_json::to_vec(&header).expect("checkpoint header serialization cannot fail");
        let mut payload = Vec::new();
        for (_, _, t) in &tensors {
            for &v in &t.data {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        write_container(CHECKPOINT_MAGIC, &header_bytes, &payload)
    }

    /// Parses a `TEMB` container.
    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        let (header_bytes, payload) = read_container(CHECKPOINT_MAGIC, bytes)?;
        let mut header: CheckpointHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        if header.kind != "checkpoint" {
            return Err(ContainerError::Header(alloc::format!(
                "expected kind \"checkpoint\", found {:?}",
                header.kind
            )));
        }
        header.vocab.rebuild_lookup();

        let mut offset = 0usize;
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for d in &header.tensors {
            let count = d.rows * d.cols;
            let end = offset + count * 4;
            if payload.len() < end {
                return Err(ContainerError::Truncated { context: "tensor payload" });
            }
            let mut data = Vec::with_capacity(count);
            for i in 0..count {
                let at = offset + i * 4;
                let raw = [
                    payload[at],
                    payload[at + 1],
                    payload[at + 2],
                    payload[at + 3],
                ];
                data.push(f32::from_le_bytes(raw) as f64);
            }
            tensors.insert(d.name.clone(), Tensor::from_vec(d.rows, d.cols, data));
            order.push(d.name.clone());
            offset = end;
        }
        if offset != payload.len() {
            return Err(ContainerError::Header(
                "payload longer than the declared tensors".to_string(),
            ));
        }

        let prompt_q = tensors
            .remove(PROMPT_Q)
            .ok_or_else(|| ContainerError::Header("missing prompt_q tensor".to_string()))?;
        let prompt_d = tensors
            .remove(PROMPT_D)
            .ok_or_else(|| ContainerError::Header("missing prompt_d tensor".to_string()))?;
        let summarizer = match (tensors.remove("summarizer.w"), tensors.remove("summarizer.u")) {
            (Some(w), Some(u)) => Some(SummaryWeights { w, u }),
            (None, None) => None,
            _ => {
                return Err(ContainerError::Header(
                    "summarizer section must carry both w and u".to_string(),
                ))
            }
        };
        let expected = (header.config.prompt_len, header.config.dim);
        for p in [&prompt_q, &prompt_d] {
            if (p.rows, p.cols) != expected {
                return Err(ContainerError::Header(alloc::format!(
                    "prompt tensor is {}x{}, config expects {}x{}",
                    p.rows, p.cols, expected.0, expected.1
                )));
            }
        }
        let model = EncoderModel::from_parts(header.config, tensors)?;
        Ok(Checkpoint {
            model,
            prompts: SoftPrompt { prompt_q, prompt_d },
            summarizer,
            vocab: header.vocab,
            prompt_tuned: header.prompt_tuned,
        })
    }

    /// SHA-256 of the canonical encoding, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.encode());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&alloc::format!("{b:02x}"));
        }
        out
    }

    /// Rejects a checkpoint whose embedding width differs from the requested
    /// config.
    pub fn ensure_dim(&self, requested: &EncoderConfig) -> Result<(), ContainerError> {
        let actual = self.model.config().dim;
        if actual != requested.dim {
            return Err(ContainerError::DimMismatch {
                requested: requested.dim,
                actual,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> Checkpoint {
        let config = EncoderConfig {
            dim: 16,
            vocab_size: 64,
            layers: 1,
            heads: 2,
            max_seq: 8,
            prompt_len: 2,
            temperature: 0.05,
            seed: 3,
            shared_base: true,
        };
        let vocab = Vocab::from_texts(["reset clock domain timing"], 64);
        let mut ckpt = Checkpoint::init(config, vocab).unwrap();
        ckpt.summarizer = Some(SummaryWeights::init(16, 9));
        ckpt
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = checkpoint();
        let bytes = ckpt.encode();
        let loaded = Checkpoint::decode(&bytes).unwrap();
        for (name, t) in ckpt.model.params() {
            assert!(t.bits_eq(&loaded.model.params()[name]), "tensor {name}");
        }
        assert!(ckpt.prompts.prompt_q.bits_eq(&loaded.prompts.prompt_q));
        assert!(ckpt.prompts.prompt_d.bits_eq(&loaded.prompts.prompt_d));
        let (a, b) = (ckpt.summarizer.as_ref().unwrap(), loaded.summarizer.as_ref().unwrap());
        assert!(a.w.bits_eq(&b.w) && a.u.bits_eq(&b.u));
        assert_eq!(ckpt.vocab, loaded.vocab);
        assert_eq!(ckpt.prompt_tuned, loaded.prompt_tuned);
        // And the encoding itself is stable.
        assert_eq!(bytes, loaded.encode());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = checkpoint().encode();
        bytes[0] = b'X';
        match Checkpoint::decode(&bytes) {
            Err(ContainerError::BadMagic { found, .. }) => assert!(found.starts_with('X')),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = checkpoint().encode();
        bytes[4] = 99;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(ContainerError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let bytes = checkpoint().encode();
        for cut in [4usize, 12, 20, bytes.len() - 3] {
            assert!(
                Checkpoint::decode(&bytes[..cut]).is_err(),
                "cut at {cut} should fail"
            );
        }
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let ckpt = checkpoint();
        let mut requested = ckpt.model.config().clone();
        requested.dim = 32;
        match ckpt.ensure_dim(&requested) {
            Err(ContainerError::DimMismatch { requested: 32, actual: 16 }) => {}
            other => panic!("expected DimMismatch, got {other:?}"),
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = checkpoint();
        let b = checkpoint();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = checkpoint();
        c.prompts.prompt_q.data[0] += 0.5;
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
