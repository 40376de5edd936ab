//! Rule-based word/punctuation tokenizer with a hashed out-of-vocabulary band.
//!
//! Tokenization lowercases the input and splits on Unicode whitespace and on
//! word/punctuation boundaries; a run of punctuation becomes a single token.
//! Word characters are alphanumerics plus `_`, so identifiers like
//! `clock_freq` stay whole. Ids come from a frequency-built vocabulary; the
//! top quarter of the id space is reserved for unknown tokens, which hash
//! into it, so ids are stable for any input given the same vocabulary.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

/// One token: its lowercased surface and vocabulary id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub id: u32,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits text into lowercased token surfaces.
pub fn split_surfaces(text: &str) -> Vec<String> {
    split_spans(text).into_iter().map(|(s, _)| s).collect()
}

/// Splits text into lowercased surfaces with their byte ranges in `text`.
pub fn split_spans(text: &str) -> Vec<(String, Range<usize>)> {
    #[derive(PartialEq, Clone, Copy)]
    enum Kind {
        Word,
        Punct,
    }
    let mut out = Vec::new();
    let mut cur: Option<(Kind, usize)> = None;
    for (pos, ch) in text.char_indices() {
        let kind = if ch.is_whitespace() {
            if let Some((_, start)) = cur.take() {
                out.push(start..pos);
            }
            continue;
        } else if is_word_char(ch) {
            Kind::Word
        } else {
            Kind::Punct
        };
        match cur {
            Some((k, _)) if k == kind => {}
            Some((_, start)) => {
                out.push(start..pos);
                cur = Some((kind, pos));
            }
            None => cur = Some((kind, pos)),
        }
    }
    if let Some((_, start)) = cur {
        out.push(start..text.len());
    }
    out.into_iter()
        .map(|r| (text[r.clone()].to_lowercase(), r))
        .collect()
}

/// FNV-1a over the surface bytes; stable across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

/// A fixed-size vocabulary mapping surfaces to ids.
///
/// Ids `[0, oov_start)` are assigned to known surfaces; ids
/// `[oov_start, size)` form the hashed out-of-vocabulary band covering the
/// top 25% of the id space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
    surfaces: Vec<String>,
    #[serde(skip)]
    lookup: BTreeMap<String, u32>,
}

impl Vocab {
    /// An empty vocabulary: every token falls in the OOV band.
    pub fn empty(size: u32) -> Self {
        assert!(size >= 4, "vocab size must allow an OOV band");
        Vocab {
            size,
            surfaces: Vec::new(),
            lookup: BTreeMap::new(),
        }
    }

    /// Builds a vocabulary from sample texts: surfaces ranked by frequency
    /// (ties alphabetical) fill the in-vocabulary region.
    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I, size: u32) -> Self {
        assert!(size >= 4, "vocab size must allow an OOV band");
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for text in texts {
            for surface in split_surfaces(text) {
                *counts.entry(surface).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let capacity = (size - size / 4) as usize;
        let surfaces: Vec<String> = ranked
            .into_iter()
            .take(capacity)
            .map(|(s, _)| s)
            .collect();
        let mut vocab = Vocab {
            size,
            surfaces,
            lookup: BTreeMap::new(),
        };
        vocab.rebuild_lookup();
        vocab
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_lookup(&mut self) {
        self.lookup = self
            .surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    /// First id of the out-of-vocabulary band.
    pub fn oov_start(&self) -> u32 {
        self.size - self.size / 4
    }

    pub fn known(&self) -> usize {
        self.surfaces.len()
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    /// Id for a lowercased surface.
    pub fn id_of(&self, surface: &str) -> u32 {
        match self.lookup.get(surface) {
            Some(&id) => id,
            None => {
                let band = u64::from(self.size - self.oov_start());
                self.oov_start() + (fnv1a(surface.as_bytes()) % band) as u32
            }
        }
    }

    /// Tokenizes text into (surface, id) tokens. Empty text gives an empty
    /// sequence.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        split_surfaces(text)
            .into_iter()
            .map(|surface| {
                let id = self.id_of(&surface);
                Token { surface, id }
            })
            .collect()
    }

    /// Tokenizes straight to ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_surfaces(text)
            .into_iter()
            .map(|s| self.id_of(&s))
            .collect()
    }
}
