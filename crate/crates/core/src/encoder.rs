//! The dual encoder: a small transformer with sinusoidal positions, mean
//! pooling, and trainable soft prompts for the query and document sides.
//!
//! Queries and documents are embedded independently into unit vectors of a
//! shared space; relevance is their dot product. When prompts are enabled,
//! the prompt rows are prepended as virtual token embeddings and excluded
//! from pooling. The base may be shared between the two sides (the default)
//! or duplicated; the prompts are always separate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("batch needs at least 2 pairs, got {size}")]
    BatchTooSmall { size: usize },
    #[error("batch reuses positive chunk {chunk_id:?}; in-batch negatives would be false")]
    DuplicateChunk { chunk_id: String },
    #[error("non-finite {what} encountered{}", match .detail { Some(d) => alloc::format!(": {d}"), None => String::new() })]
    NonFinite {
        what: &'static str,
        detail: Option<String>,
    },
}

/// Hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding dimension; must be divisible by `heads`.
    pub dim: usize,
    pub vocab_size: u32,
    pub layers: usize,
    pub heads: usize,
    /// Maximum token positions per input; longer inputs are truncated.
    pub max_seq: usize,
    /// Soft prompt length (virtual tokens prepended per side).
    pub prompt_len: usize,
    /// Softmax temperature of the contrastive objective.
    pub temperature: f64,
    pub seed: u64,
    /// One base for both sides when true; separate bases otherwise.
    pub shared_base: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            vocab_size: 8192,
            layers: 2,
            heads: 4,
            max_seq: 320,
            prompt_len: 8,
            temperature: 0.05,
            seed: 0,
            shared_base: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(EncoderError::InvalidConfig(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(EncoderError::InvalidConfig("layers must be >= 1".into()));
        }
        if self.max_seq == 0 {
            return Err(EncoderError::InvalidConfig("max_seq must be >= 1".into()));
        }
        if self.vocab_size < 4 {
            return Err(EncoderError::InvalidConfig("vocab_size must be >= 4".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(EncoderError::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Which side of the dual encoder an input belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Document,
}

/// Parameters updated during a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainableSet {
    /// Every base parameter; prompts are bypassed entirely.
    All,
    /// Only the soft prompts; the base is frozen and prompts are active.
    PromptsOnly,
}

pub const PROMPT_Q: &str = "prompt_q";
pub const PROMPT_D: &str = "prompt_d";

/// Trainable prompt rows for each side.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPrompt {
    pub prompt_q: Tensor,
    pub prompt_d: Tensor,
}

impl SoftPrompt {
    pub fn init(config: &EncoderConfig, rng: &mut rng::Rng) -> Self {
        let std = 1.0 / libm::sqrt(config.dim as f64);
        SoftPrompt {
            prompt_q: Tensor::randn(config.prompt_len, config.dim, std, rng),
            prompt_d: Tensor::randn(config.prompt_len, config.dim, std, rng),
        }
    }
}

/// The base encoder weights plus derived constants.
#[derive(Debug)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: BTreeMap<String, Tensor>,
    positional: Tensor,
    truncations: AtomicU64,
}

impl Clone for EncoderModel {
    fn clone(&self) -> Self {
        EncoderModel {
            config: self.config.clone(),
            params: self.params.clone(),
            positional: self.positional.clone(),
            truncations: AtomicU64::new(self.truncations.load(Ordering::Relaxed)),
        }
    }
}

fn base_prefixes(config: &EncoderConfig) -> Vec<&'static str> {
    if config.shared_base {
        alloc::vec!["base."]
    } else {
        alloc::vec!["base_q.", "base_d."]
    }
}

/// Tensor names (without base prefix) in their canonical order, with shapes.
fn base_tensor_shapes(config: &EncoderConfig) -> Vec<(String, usize, usize)> {
    let d = config.dim;
    let mut out = Vec::new();
    out.push(("embed".to_string(), config.vocab_size as usize, d));
    for l in 0..config.layers {
        for name in ["attn_q", "attn_k", "attn_v", "attn_o"] {
            out.push((format!("l{l}.{name}_w"), d, d));
            out.push((format!("l{l}.{name}_b"), 1, d));
        }
        out.push((format!("l{l}.ln1_g"), 1, d));
        out.push((format!("l{l}.ln1_b"), 1, d));
        out.push((format!("l{l}.ln2_g"), 1, d));
        out.push((format!("l{l}.ln2_b"), 1, d));
        out.push((format!("l{l}.ffn1_w"), d, 4 * d));
        out.push((format!("l{l}.ffn1_b"), 1, 4 * d));
        out.push((format!("l{l}.ffn2_w"), 4 * d, d));
        out.push((format!("l{l}.ffn2_b"), 1, d));
    }
    out.push(("ln_f_g".to_string(), 1, d));
    out.push(("ln_f_b".to_string(), 1, d));
    out
}

fn sinusoidal_positions(rows: usize, dim: usize) -> Tensor {
    let mut pe = Tensor::zeros(rows, dim);
    for pos in 0..rows {
        for i in 0..dim / 2 {
            let rate = libm::pow(10_000.0, -2.0 * i as f64 / dim as f64);
            let angle = pos as f64 * rate;
            pe.set(pos, 2 * i, libm::sin(angle));
            pe.set(pos, 2 * i + 1, libm::cos(angle));
        }
    }
    pe.round_to_f32();
    pe
}

impl EncoderModel {
    /// Fresh model with seeded initialization. Weight matrices draw from
    /// `N(0, 1/sqrt(dim))`, biases start at zero, layer-norm gains at one.
    pub fn init(config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = rng::substream(config.seed, &[0x656e63]);
        let std = 1.0 / libm::sqrt(config.dim as f64);
        let mut params = BTreeMap::new();
        for prefix in base_prefixes(&config) {
            for (name, rows, cols) in base_tensor_shapes(&config) {
                let full = format!("{prefix}{name}");
                let tensor = if name.ends_with("_b") || name.ends_with("ln1_b")
                    || name.ends_with("ln2_b") || name == "ln_f_b"
                {
                    Tensor::zeros(rows, cols)
                } else if name.ends_with("_g") {
                    Tensor::filled(rows, cols, 1.0)
                } else {
                    Tensor::randn(rows, cols, std, &mut rng)
                };
                params.insert(full, tensor);
            }
        }
        let positional = sinusoidal_positions(config.prompt_len + config.max_seq, config.dim);
        Ok(EncoderModel {
            config,
            params,
            positional,
            truncations: AtomicU64::new(0),
        })
    }

    /// Rebuilds a model from its config and named tensors (checkpoint load).
    pub fn from_parts(
        config: EncoderConfig,
        params: BTreeMap<String, Tensor>,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        for prefix in base_prefixes(&config) {
            for (name, rows, cols) in base_tensor_shapes(&config) {
                let full = format!("{prefix}{name}");
                let t = params.get(&full).ok_or_else(|| {
                    EncoderError::InvalidConfig(format!("missing tensor {full:?}"))
                })?;
                if (t.rows, t.cols) != (rows, cols) {
                    return Err(EncoderError::DimMismatch {
                        expected: rows * cols,
                        got: t.rows * t.cols,
                    });
                }
            }
        }
        let positional = sinusoidal_positions(config.prompt_len + config.max_seq, config.dim);
        Ok(EncoderModel {
            config,
            params,
            positional,
            truncations: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Inputs truncated to `max_seq` so far.
    pub fn truncation_warnings(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }

    fn prefix_for(&self, side: Side) -> &'static str {
        if self.config.shared_base {
            "base."
        } else {
            match side {
                Side::Query => "base_q.",
                Side::Document => "base_d.",
            }
        }
    }

    fn truncate<'a>(&self, ids: &'a [u32]) -> &'a [u32] {
        if ids.len() > self.config.max_seq {
            self.truncations.fetch_add(1, Ordering::Relaxed);
            &ids[..self.config.max_seq]
        } else {
            ids
        }
    }
}

/// Per-tape handles to leafed parameters.
struct TapeParams {
    nodes: BTreeMap<String, NodeId>,
}

impl TapeParams {
    fn leaf_all(
        tape: &mut Tape,
        model: &EncoderModel,
        prompts: Option<&SoftPrompt>,
    ) -> TapeParams {
        let mut nodes = BTreeMap::new();
        for (name, tensor) in &model.params {
            nodes.insert(name.clone(), tape.leaf(tensor.clone()));
        }
        if let Some(p) = prompts {
            nodes.insert(PROMPT_Q.to_string(), tape.leaf(p.prompt_q.clone()));
            nodes.insert(PROMPT_D.to_string(), tape.leaf(p.prompt_d.clone()));
        }
        TapeParams { nodes }
    }

    fn get(&self, name: &str) -> NodeId {
        self.nodes[name]
    }
}

/// Builds the encoder forward pass on a tape, returning the `[1, dim]` unit
/// embedding node. `ids` must already be truncated.
fn encode_on_tape(
    tape: &mut Tape,
    params: &TapeParams,
    model: &EncoderModel,
    side: Side,
    ids: &[u32],
    use_prompt: bool,
) -> NodeId {
    let cfg = &model.config;
    let prefix = model.prefix_for(side);
    let p = |name: &str| params.get(&format!("{prefix}{name}"));

    let tok = tape.gather(p("embed"), ids);
    let prompt_rows = if use_prompt { cfg.prompt_len } else { 0 };
    let mut x = if use_prompt {
        let prompt = params.get(match side {
            Side::Query => PROMPT_Q,
            Side::Document => PROMPT_D,
        });
        tape.concat_rows(prompt, tok)
    } else {
        tok
    };
    let rows = prompt_rows + ids.len();

    // Sinusoidal positions over the combined (prompt + token) sequence.
    let mut pe = Tensor::zeros(rows, cfg.dim);
    for r in 0..rows {
        pe.row_mut(r).copy_from_slice(model.positional.row(r));
    }
    x = tape.add_const(x, &pe);

    let head_dim = cfg.dim / cfg.heads;
    let scale = 1.0 / libm::sqrt(head_dim as f64);
    for l in 0..cfg.layers {
        let ln1 = tape.layer_norm_rows(
            x,
            p(&format!("l{l}.ln1_g")),
            p(&format!("l{l}.ln1_b")),
        );
        let q = tape.matmul(ln1, p(&format!("l{l}.attn_q_w")));
        let q = tape.add_row_broadcast(q, p(&format!("l{l}.attn_q_b")));
        let k = tape.matmul(ln1, p(&format!("l{l}.attn_k_w")));
        let k = tape.add_row_broadcast(k, p(&format!("l{l}.attn_k_b")));
        let v = tape.matmul(ln1, p(&format!("l{l}.attn_v_w")));
        let v = tape.add_row_broadcast(v, p(&format!("l{l}.attn_v_b")));
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let qh = tape.slice_cols(q, h * head_dim, head_dim);
            let kh = tape.slice_cols(k, h * head_dim, head_dim);
            let vh = tape.slice_cols(v, h * head_dim, head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            heads.push(tape.matmul(attn, vh));
        }
        let cat = tape.concat_cols(&heads);
        let proj = tape.matmul(cat, p(&format!("l{l}.attn_o_w")));
        let proj = tape.add_row_broadcast(proj, p(&format!("l{l}.attn_o_b")));
        x = tape.add(x, proj);

        let ln2 = tape.layer_norm_rows(
            x,
            p(&format!("l{l}.ln2_g")),
            p(&format!("l{l}.ln2_b")),
        );
        let h1 = tape.matmul(ln2, p(&format!("l{l}.ffn1_w")));
        let h1 = tape.add_row_broadcast(h1, p(&format!("l{l}.ffn1_b")));
        let h1 = tape.gelu(h1);
        let h2 = tape.matmul(h1, p(&format!("l{l}.ffn2_w")));
        let h2 = tape.add_row_broadcast(h2, p(&format!("l{l}.ffn2_b")));
        x = tape.add(x, h2);
    }
    let xf = tape.layer_norm_rows(x, p("ln_f_g"), p("ln_f_b"));
    // Pool over token positions only; prompt rows steer but are not pooled.
    let pooled = tape.mean_rows(xf, prompt_rows, rows);
    tape.l2_normalize_rows(pooled)
}

fn encode(
    model: &EncoderModel,
    prompts: &SoftPrompt,
    side: Side,
    ids: &[u32],
    use_prompt: bool,
) -> Result<Vec<f64>, EncoderError> {
    if ids.is_empty() {
        return Err(EncoderError::InvalidConfig(
            "cannot encode an empty token sequence".into(),
        ));
    }
    let ids = model.truncate(ids);
    let mut tape = Tape::new();
    let params = TapeParams::leaf_all(&mut tape, model, use_prompt.then_some(prompts));
    let out = encode_on_tape(&mut tape, &params, model, side, ids, use_prompt);
    let v = tape.value(out);
    if !v.is_finite() {
        return Err(EncoderError::NonFinite {
            what: "embedding",
            detail: None,
        });
    }
    Ok(v.data.clone())
}

/// Embeds a query into a unit vector. With `use_prompt`, the query prompt
/// rows are prepended before encoding.
pub fn encode_query(
    ids: &[u32],
    model: &EncoderModel,
    prompts: &SoftPrompt,
    use_prompt: bool,
) -> Result<Vec<f64>, EncoderError> {
    encode(model, prompts, Side::Query, ids, use_prompt)
}

/// Embeds a document (or chunk) into a unit vector.
pub fn encode_document(
    ids: &[u32],
    model: &EncoderModel,
    prompts: &SoftPrompt,
    use_prompt: bool,
) -> Result<Vec<f64>, EncoderError> {
    encode(model, prompts, Side::Document, ids, use_prompt)
}

/// Dot product of two unit vectors, clamped into `[-1, 1]`.
pub fn similarity(e_q: &[f64], e_d: &[f64]) -> Result<f64, EncoderError> {
    if e_q.len() != e_d.len() {
        return Err(EncoderError::DimMismatch {
            expected: e_q.len(),
            got: e_d.len(),
        });
    }
    let s = crate::tensor::dot(e_q, e_d);
    Ok(s.clamp(-1.0, 1.0))
}

/// One training pair: a query and its positive chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainPair {
    pub query_ids: Vec<u32>,
    pub doc_ids: Vec<u32>,
    /// Identity of the positive chunk; two pairs with the same chunk cannot
    /// share a batch.
    pub chunk_id: String,
}

/// A batch of pairs with pairwise-distinct positive chunks.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pairs: Vec<TrainPair>,
}

impl TrainBatch {
    pub fn new(pairs: Vec<TrainPair>) -> Result<Self, EncoderError> {
        if pairs.len() < 2 {
            return Err(EncoderError::BatchTooSmall { size: pairs.len() });
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.chunk_id.clone()) {
                return Err(EncoderError::DuplicateChunk {
                    chunk_id: p.chunk_id.clone(),
                });
            }
        }
        Ok(TrainBatch { pairs })
    }

    pub fn pairs(&self) -> &[TrainPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Gradients of the contrastive loss for one batch, keyed by tensor name.
pub type GradMap = BTreeMap<String, Tensor>;

/// Temperature-scaled in-batch-negative contrastive loss.
///
/// For batch embeddings `e_q_i`, `e_d_j` the logits are
/// `sim(e_q_i, e_d_j) / tau`; the loss is the mean over rows of the
/// cross-entropy against the diagonal. Returns the loss and gradients over
/// the requested trainable set.
pub fn contrastive_loss(
    batch: &TrainBatch,
    model: &EncoderModel,
    prompts: &SoftPrompt,
    tau: f64,
    trainable: TrainableSet,
) -> Result<(f64, GradMap), EncoderError> {
    let use_prompt = matches!(trainable, TrainableSet::PromptsOnly);
    let mut tape = Tape::new();
    let params = TapeParams::leaf_all(&mut tape, model, use_prompt.then_some(prompts));
    let mut q_rows = Vec::with_capacity(batch.len());
    let mut d_rows = Vec::with_capacity(batch.len());
    for pair in batch.pairs() {
        let q_ids = model.truncate(&pair.query_ids);
        let d_ids = model.truncate(&pair.doc_ids);
        q_rows.push(encode_on_tape(
            &mut tape, &params, model, Side::Query, q_ids, use_prompt,
        ));
        d_rows.push(encode_on_tape(
            &mut tape, &params, model, Side::Document, d_ids, use_prompt,
        ));
    }
    let eq = tape.stack_rows(&q_rows);
    let ed = tape.stack_rows(&d_rows);
    let sims = tape.matmul_nt(eq, ed);
    let logits = tape.scale(sims, 1.0 / tau);
    let loss_node = tape.cross_entropy_diag_mean(logits);
    let loss = tape.scalar(loss_node);
    if !loss.is_finite() {
        return Err(EncoderError::NonFinite {
            what: "loss",
            detail: Some(format!("batch of {} pairs", batch.len())),
        });
    }
    tape.backward(loss_node);

    let mut grads = GradMap::new();
    match trainable {
        TrainableSet::All => {
            for name in model.params.keys() {
                grads.insert(name.clone(), tape.grad(params.get(name)).clone());
            }
        }
        TrainableSet::PromptsOnly => {
            grads.insert(PROMPT_Q.to_string(), tape.grad(params.get(PROMPT_Q)).clone());
            grads.insert(PROMPT_D.to_string(), tape.grad(params.get(PROMPT_D)).clone());
        }
    }
    for (name, g) in &grads {
        if !g.is_finite() {
            return Err(EncoderError::NonFinite {
                what: "gradient",
                detail: Some(name.clone()),
            });
        }
    }
    Ok((loss, grads))
}
