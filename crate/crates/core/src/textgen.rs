//! Text-generation backends.
//!
//! Query synthesis and abstractive summaries go through the [`TextGenerator`]
//! capability. Two implementations exist: a deterministic offline
//! [`TemplateBackend`] defined here (used by every test), and an
//! OpenAI-compatible HTTP client in the companion crate. The template
//! backend fills fixed question templates with the most frequent content
//! words of the passage embedded in the request, so its output is a pure
//! function of `(request, seed)`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rng;
use crate::tokenizer::split_surfaces;

pub const MAX_GEN_TOKENS: u32 = 4096;

/// Marker separating instructions from the source passage in a prompt. The
/// template backend only reads words after the last occurrence.
pub const PASSAGE_MARKER: &str = "\n\nPassage:\n";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("placeholder {{{0}}} has no slot value")]
    MissingSlot(String),
    #[error("backend error{}: {message}", match .status { Some(s) => alloc::format!(" (HTTP {s})"), None => String::new() })]
    Backend { status: Option<u16>, message: String },
}

impl GenError {
    /// HTTP status attached to a backend failure, when one exists.
    pub fn status(&self) -> Option<u16> {
        match self {
            GenError::Backend { status, .. } => *status,
            _ => None,
        }
    }
}

/// One generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Honored only by the offline template backend.
    pub seed: u64,
}

impl GenRequest {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_tokens == 0 || self.max_tokens > MAX_GEN_TOKENS {
            return Err(GenError::InvalidRequest(alloc::format!(
                "max_tokens must be in 1..={MAX_GEN_TOKENS}, got {}",
                self.max_tokens
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(GenError::InvalidRequest(alloc::format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A text-generation capability.
pub trait TextGenerator {
    fn generate(&self, req: &GenRequest) -> Result<String, GenError>;

    /// Short backend kind tag, used as query provenance.
    fn kind(&self) -> &'static str;
}

/// Expands `{name}` placeholders from a slot map. A slot value may offer
/// `|`-separated alternatives; one is picked by the seeded RNG.
pub fn template_expand(
    template: &str,
    slots: &BTreeMap<String, String>,
    seed: u64,
) -> Result<String, GenError> {
    let mut rng = rng::substream(seed, &[0x74706c74]);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let close = tail
            .find('}')
            .ok_or_else(|| GenError::InvalidRequest("unclosed { in template".to_string()))?;
        let name = &tail[..close];
        let value = slots
            .get(name)
            .ok_or_else(|| GenError::MissingSlot(name.to_string()))?;
        let alternatives: Vec<&str> = value.split('|').collect();
        let pick = if alternatives.len() == 1 {
            alternatives[0]
        } else {
            alternatives[rng::index(&mut rng, alternatives.len())]
        };
        out.push_str(pick);
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "if", "in",
    "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "when", "which",
    "will", "with",
];

fn is_content_word(surface: &str) -> bool {
    surface.chars().any(|c| c.is_alphanumeric())
        && surface.chars().count() >= 3
        && !STOPWORDS.contains(&surface)
}

/// The two most frequent content words of a passage, ties broken
/// alphabetically. Falls back to any token when the passage has fewer than
/// two content words.
pub fn top_keywords(passage: &str) -> (String, String) {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut any: BTreeMap<String, u64> = BTreeMap::new();
    for surface in split_surfaces(passage) {
        *any.entry(surface.clone()).or_insert(0) += 1;
        if is_content_word(&surface) {
            *counts.entry(surface).or_insert(0) += 1;
        }
    }
    let pick = |m: &BTreeMap<String, u64>| -> Vec<String> {
        let mut ranked: Vec<(&String, &u64)> = m.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        ranked.into_iter().take(2).map(|(s, _)| s.clone()).collect()
    };
    let mut top = pick(&counts);
    if top.is_empty() {
        top = pick(&any);
    }
    match top.len() {
        0 => ("this".to_string(), "this".to_string()),
        1 => (top[0].clone(), top[0].clone()),
        _ => (top[0].clone(), top[1].clone()),
    }
}

/// Question templates covering definition, how-to, parameter, error,
/// comparison, listing, location, and constraint intents.
pub const QUESTION_TEMPLATES: &[&str] = &[
    "what is {kw1}?",
    "how do i set up {kw1} with {kw2}?",
    "which parameter controls {kw1}?",
    "why does {kw1} fail when {kw2} is enabled?",
    "what is the difference between {kw1} and {kw2}?",
    "which options affect {kw1}?",
    "where is {kw1} defined?",
    "what constraint applies to {kw1}?",
];

/// Deterministic offline stand-in for a hosted model.
#[derive(Debug, Clone, Default)]
pub struct TemplateBackend;

impl TemplateBackend {
    pub fn new() -> Self {
        TemplateBackend
    }
}

impl TextGenerator for TemplateBackend {
    fn generate(&self, req: &GenRequest) -> Result<String, GenError> {
        req.validate()?;
        let passage = match req.user_prompt.rfind(PASSAGE_MARKER) {
            Some(pos) => &req.user_prompt[pos + PASSAGE_MARKER.len()..],
            None => req.user_prompt.as_str(),
        };
        let (kw1, kw2) = top_keywords(passage);
        let mut rng = rng::substream(req.seed, &[0x7175657374696f6e]);
        let template = QUESTION_TEMPLATES[rng::index(&mut rng, QUESTION_TEMPLATES.len())];
        let mut slots = BTreeMap::new();
        slots.insert("kw1".to_string(), kw1);
        slots.insert("kw2".to_string(), kw2);
        let text = template_expand(template, &slots, req.seed)?;
        // Respect the token budget; template output is short so this only
        // matters for adversarially small budgets.
        let surfaces = split_surfaces(&text);
        if surfaces.len() > req.max_tokens as usize {
            Ok(surfaces[..req.max_tokens as usize].join(" "))
        } else {
            Ok(text)
        }
    }

    fn kind(&self) -> &'static str {
        "template"
    }
}
