//! Attention-based extractive summarization.
//!
//! Each sentence of a document gets an additive attention score
//! `u . tanh(W e_s)` over its (document-side, promptless) embedding;
//! softmax of the scores gives selection weights, and the top-m sentences in
//! document order form the summary. Training maximizes the cosine between
//! the weighted sentence-embedding mixture and the full-document embedding,
//! a differentiable relaxation of the top-m pick, by gradient ascent with a
//! backtracking step so the objective never decreases.


use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_row, NodeId, Tape};
use crate::corpus::{Chunk, Corpus, Document};
use crate::encoder::{encode_document, EncoderError, EncoderModel, SoftPrompt};
use crate::rng;
use crate::tensor::Tensor;
use crate::tokenizer::{split_surfaces, Vocab};

#[derive(Debug, thiserror::Error)]
pub enum SummarizerError {
    #[error("weights are for dim {weights_dim} but the encoder has dim {encoder_dim}")]
    DimMismatch {
        weights_dim: usize,
        encoder_dim: usize,
    },
    #[error("summary for doc {summary_doc:?} applied to chunk of doc {chunk_doc:?}")]
    DocMismatch {
        summary_doc: String,
        chunk_doc: String,
    },
    #[error("document {doc_id:?} has no sentences")]
    NoSentences { doc_id: String },
    #[error("non-finite gradient in summarizer training at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// A sentence of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_ids: Vec<u32>,
}

/// Learned attention parameters: a square map plus a scoring vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryWeights {
    /// `[dim, dim]`.
    pub w: Tensor,
    /// `[1, dim]`.
    pub u: Tensor,
}

impl SummaryWeights {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut r = rng::substream(seed, &[0x73756d]);
        let std = 1.0 / libm::sqrt(dim as f64);
        SummaryWeights {
            w: Tensor::randn(dim, dim, std, &mut r),
            u: Tensor::randn(1, dim, std, &mut r),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.rows
    }
}

/// An extracted summary: selected sentence ordinals (ascending), the joined
/// text, and the full attention distribution over the document's sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub doc_id: String,
    pub selected: Vec<usize>,
    pub text: String,
    pub weights: Vec<f64>,
}

impl Summary {
    /// The no-context stand-in used by the summary ablation.
    pub fn empty(doc_id: &str) -> Self {
        Summary {
            doc_id: doc_id.to_string(),
            selected: Vec::new(),
            text: String::new(),
            weights: Vec::new(),
        }
    }
}

const SENTENCE_TERMINATORS: [char; 3] = ['.', '!', '?'];
const MIN_SENTENCE_TOKENS: usize = 3;

/// Splits a document on `.`, `!`, `?`, and newlines, merging fragments
/// shorter than three tokens into their neighbour (previous when one
/// exists, otherwise the following fragment).
pub fn split_sentences(doc: &Document, vocab: &Vocab) -> Vec<Sentence> {
    let text = &doc.text;
    // Fragment boundaries: after each run of terminators, and at newlines.
    let mut fragments: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    let mut in_terminator_run = false;
    for (pos, ch) in text.char_indices() {
        let is_term = SENTENCE_TERMINATORS.contains(&ch);
        if in_terminator_run && !is_term {
            fragments.push((start, pos));
            start = pos;
            in_terminator_run = false;
        }
        if is_term {
            in_terminator_run = true;
        } else if ch == '\n' {
            fragments.push((start, pos));
            start = pos + ch.len_utf8();
        }
    }
    if start < text.len() {
        fragments.push((start, text.len()));
    }

    // Trim whitespace off each fragment and drop empty ones.
    let mut trimmed: Vec<(usize, usize)> = Vec::new();
    for (s, e) in fragments {
        let frag = &text[s..e];
        let lead = frag.len() - frag.trim_start().len();
        let tail = frag.len() - frag.trim_end().len();
        if s + lead < e - tail {
            trimmed.push((s + lead, e - tail));
        }
    }

    // Merge short fragments into the previous sentence; a short head merges
    // forward afterwards.
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in trimmed {
        let tokens = split_surfaces(&text[s..e]).len();
        match merged.last_mut() {
            Some(last) if tokens < MIN_SENTENCE_TOKENS => last.1 = e,
            _ => merged.push((s, e)),
        }
    }
    if merged.len() >= 2 {
        let head_tokens = split_surfaces(&text[merged[0].0..merged[0].1]).len();
        if head_tokens < MIN_SENTENCE_TOKENS {
            let (s, _) = merged[0];
            merged[1].0 = s;
            merged.remove(0);
        }
    }

    merged
        .into_iter()
        .enumerate()
        .map(|(ordinal, (s, e))| {
            let sentence_text = text[s..e].to_string();
            let token_ids = vocab.encode(&sentence_text);
            Sentence {
                doc_id: doc.doc_id.clone(),
                ordinal,
                text: sentence_text,
                token_ids,
            }
        })
        .collect()
}

fn check_dim(weights: &SummaryWeights, model: &EncoderModel) -> Result<(), SummarizerError> {
    if weights.dim() != model.config().dim || weights.u.cols != model.config().dim {
        return Err(SummarizerError::DimMismatch {
            weights_dim: weights.dim(),
            encoder_dim: model.config().dim,
        });
    }
    Ok(())
}

/// Promptless document-side embeddings of each sentence.
pub fn sentence_embeddings(
    sentences: &[Sentence],
    model: &EncoderModel,
    prompts: &SoftPrompt,
) -> Result<Vec<Vec<f64>>, SummarizerError> {
    sentences
        .iter()
        .map(|s| {
            let ids: &[u32] = if s.token_ids.is_empty() { &[0] } else { &s.token_ids };
            encode_document(ids, model, prompts, false).map_err(SummarizerError::from)
        })
        .collect()
}

/// Softmax attention weights over fixed sentence embeddings.
pub fn score_embeddings(
    embeddings: &[Vec<f64>],
    weights: &SummaryWeights,
) -> Result<Vec<f64>, SummarizerError> {
    let dim = weights.dim();
    let mut scores = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.len() != dim {
            return Err(SummarizerError::DimMismatch {
                weights_dim: dim,
                encoder_dim: e.len(),
            });
        }
        // u . tanh(W e)
        let mut we = alloc::vec![0.0; dim];
        for r in 0..dim {
            we[r] = libm::tanh(crate::tensor::dot(weights.w.row(r), e));
        }
        scores.push(crate::tensor::dot(&weights.u.data, &we));
    }
    let mut out = alloc::vec![0.0; scores.len()];
    softmax_row(&scores, &mut out);
    Ok(out)
}

/// Attention weights over the sentences of one document; a probability
/// distribution (sums to 1).
pub fn attention_scores(
    doc: &Document,
    weights: &SummaryWeights,
    model: &EncoderModel,
    prompts: &SoftPrompt,
    vocab: &Vocab,
) -> Result<Vec<f64>, SummarizerError> {
    check_dim(weights, model)?;
    let sentences = split_sentences(doc, vocab);
    if sentences.is_empty() {
        return Err(SummarizerError::NoSentences {
            doc_id: doc.doc_id.clone(),
        });
    }
    let embeddings = sentence_embeddings(&sentences, model, prompts)?;
    score_embeddings(&embeddings, weights)
}

/// Selects the `m` highest-weight sentences (ties to the lower ordinal),
/// restores document order, and joins them with single spaces.
pub fn extract_summary(
    doc: &Document,
    weights: &SummaryWeights,
    model: &EncoderModel,
    prompts: &SoftPrompt,
    vocab: &Vocab,
    m: usize,
) -> Result<Summary, SummarizerError> {
    assert!(m >= 1, "summary must keep at least one sentence");
    let sentences = split_sentences(doc, vocab);
    if sentences.is_empty() {
        return Err(SummarizerError::NoSentences {
            doc_id: doc.doc_id.clone(),
        });
    }
    let embeddings = sentence_embeddings(&sentences, model, prompts)?;
    check_dim(weights, model)?;
    let w = score_embeddings(&embeddings, weights)?;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by(|&a, &b| {
        w[b].partial_cmp(&w[a])
            .expect("attention weights are finite")
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(m).collect();
    selected.sort_unstable();
    let text = selected
        .iter()
        .map(|&i| sentences[i].text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Summary {
        doc_id: doc.doc_id.clone(),
        selected,
        text,
        weights: w,
    })
}

/// Prefixes a chunk with its document's summary; this is the text the
/// document encoder sees at index time. An empty summary leaves the chunk
/// unchanged (the no-summary ablation).
pub fn contextualize_chunk(chunk: &Chunk, summary: &Summary) -> Result<String, SummarizerError> {
    if summary.doc_id != chunk.doc_id {
        return Err(SummarizerError::DocMismatch {
            summary_doc: summary.doc_id.clone(),
            chunk_doc: chunk.doc_id.clone(),
        });
    }
    if summary.text.is_empty() {
        return Ok(chunk.text.clone());
    }
    Ok(alloc::format!("{}\n\n{}", summary.text, chunk.text))
}

/// Builds the training objective for fixed per-document sentence embeddings
/// and document embeddings: the mean cosine between each document's
/// attention-weighted sentence mixture and its full embedding.
fn objective_on_tape(
    tape: &mut Tape,
    w: NodeId,
    u: NodeId,
    docs: &[(Tensor, Tensor)],
) -> NodeId {
    let mut cosines = Vec::with_capacity(docs.len());
    for (sent_embs, doc_emb) in docs {
        let e = tape.leaf(sent_embs.clone());
        let d = tape.leaf(doc_emb.clone());
        let we = tape.matmul_nt(e, w);
        let t = tape.tanh(we);
        let scores = tape.matmul_nt(u, t);
        let alpha = tape.softmax_rows(scores);
        let mix = tape.matmul(alpha, e);
        let mixn = tape.l2_normalize_rows(mix);
        cosines.push(tape.matmul_nt(mixn, d));
    }
    let stacked = tape.stack_rows(&cosines);
    tape.mean_rows(stacked, 0, docs.len())
}

/// Objective value and gradients for the current weights.
pub fn summarizer_objective(
    weights: &SummaryWeights,
    docs: &[(Tensor, Tensor)],
) -> (f64, Tensor, Tensor) {
    let mut tape = Tape::new();
    let w = tape.leaf(weights.w.clone());
    let u = tape.leaf(weights.u.clone());
    let obj = objective_on_tape(&mut tape, w, u, docs);
    let value = tape.scalar(obj);
    tape.backward(obj);
    (value, tape.grad(w).clone(), tape.grad(u).clone())
}

/// Result of summarizer training.
#[derive(Debug, Clone)]
pub struct SummarizerTraining {
    pub weights: SummaryWeights,
    /// Objective after each epoch; non-decreasing.
    pub objective_log: Vec<f64>,
}

/// Trains the attention parameters on a corpus by gradient ascent with
/// backtracking (the step halves until the objective does not decrease).
pub fn train_summarizer(
    corpus: &Corpus,
    model: &EncoderModel,
    prompts: &SoftPrompt,
    vocab: &Vocab,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<SummarizerTraining, SummarizerError> {
    let dim = model.config().dim;
    let mut weights = SummaryWeights::init(dim, seed);
    if epochs == 0 {
        return Ok(SummarizerTraining {
            weights,
            objective_log: Vec::new(),
        });
    }

    // Embeddings are constants of the optimization; compute them once.
    let mut docs: Vec<(Tensor, Tensor)> = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let sentences = split_sentences(doc, vocab);
        if sentences.is_empty() {
            return Err(SummarizerError::NoSentences {
                doc_id: doc.doc_id.clone(),
            });
        }
        let sent = sentence_embeddings(&sentences, model, prompts)?;
        let mut e = Tensor::zeros(sent.len(), dim);
        for (r, v) in sent.iter().enumerate() {
            e.row_mut(r).copy_from_slice(v);
        }
        let ids = vocab.encode(&doc.text);
        let full = encode_document(&ids, model, prompts, false)?;
        docs.push((e, Tensor::from_vec(1, dim, full)));
    }

    let mut objective_log = Vec::with_capacity(epochs);
    let (mut current, mut gw, mut gu) = summarizer_objective(&weights, &docs);
    for epoch in 0..epochs {
        if !gw.is_finite() || !gu.is_finite() {
            return Err(SummarizerError::NonFiniteGradient { epoch });
        }
        let mut step = lr;
        let mut accepted = false;
        for _ in 0..30 {
            let mut candidate = weights.clone();
            for (p, g) in candidate.w.data.iter_mut().zip(&gw.data) {
                *p = (*p + step * g) as f32 as f64;
            }
            for (p, g) in candidate.u.data.iter_mut().zip(&gu.data) {
                *p = (*p + step * g) as f32 as f64;
            }
            let (value, ngw, ngu) = summarizer_objective(&candidate, &docs);
            if value >= current - 1e-12 {
                weights = candidate;
                current = value;
                gw = ngw;
                gu = ngu;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Converged: no step of any tried size improves the objective.
        }
        objective_log.push(current);
    }
    Ok(SummarizerTraining {
        weights,
        objective_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use alloc::collections::BTreeMap;

    fn doc(text: &str) -> Document {
        Document {
            doc_id: "d".to_string(),
            title: String::new(),
            text: text.to_string(),
            metadata: BTreeMap::new(),
        }
    }

    fn setup() -> (EncoderModel, SoftPrompt, Vocab) {
        let config = EncoderConfig {
            dim: 16,
            vocab_size: 64,
            layers: 1,
            heads: 2,
            max_seq: 24,
            prompt_len: 2,
            temperature: 0.05,
            seed: 21,
            shared_base: true,
        };
        let model = EncoderModel::init(config.clone()).unwrap();
        let mut r = rng::substream(config.seed, &[0x70]);
        let prompts = SoftPrompt::init(&config, &mut r);
        let vocab = Vocab::empty(64);
        (model, prompts, vocab)
    }

    #[test]
    fn splits_on_terminators() {
        let (_, _, vocab) = setup();
        let s = split_sentences(&doc("Alpha beta one. Gamma delta two."), &vocab);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "Alpha beta one.");
        assert_eq!(s[1].ordinal, 1);
    }

    #[test]
    fn unterminated_text_is_one_sentence() {
        let (_, _, vocab) = setup();
        let s = split_sentences(&doc("no terminator here at all"), &vocab);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn short_fragments_merge_into_neighbours() {
        let (_, _, vocab) = setup();
        // "Fig." is two tokens and merges forward into the next fragment.
        let s = split_sentences(&doc("Fig. 3 shows the rising edge."), &vocab);
        assert_eq!(s.len(), 1, "{s:?}");
        // A short middle fragment merges into the previous sentence; a
        // three-token fragment stands on its own.
        let s = split_sentences(&doc("The filter rolls off quickly. Ok. The gain drops fast."), &vocab);
        assert_eq!(s.len(), 2, "{s:?}");
        assert!(s[0].text.ends_with("Ok."));
        let s = split_sentences(&doc("A b. C d."), &vocab);
        assert_eq!(s.len(), 2, "{s:?}");
    }

    #[test]
    fn zero_weights_give_uniform_attention() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights {
            w: Tensor::zeros(16, 16),
            u: Tensor::zeros(1, 16),
        };
        let d = doc("Alpha beta one. Gamma delta two. Epsilon zeta three.");
        let w = attention_scores(&d, &weights, &model, &prompts, &vocab).unwrap();
        assert_eq!(w.len(), 3);
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sentence_gets_weight_one() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights::init(16, 3);
        let w = attention_scores(&doc("only one sentence here"), &weights, &model, &prompts, &vocab)
            .unwrap();
        assert_eq!(w, alloc::vec![1.0]);
    }

    #[test]
    fn weights_sum_to_one() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights::init(16, 7);
        let d = doc("Alpha beta one. Gamma delta two. Epsilon zeta three. Eta theta four.");
        let w = attention_scores(&d, &weights, &model, &prompts, &vocab).unwrap();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn attention_matches_independent_recomputation() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights::init(16, 17);
        let d = doc("Alpha beta one. Gamma delta two. Epsilon zeta three.");
        let got = attention_scores(&d, &weights, &model, &prompts, &vocab).unwrap();
        // Oracle: raw loops over the same embeddings.
        let sentences = split_sentences(&d, &vocab);
        let embs = sentence_embeddings(&sentences, &model, &prompts).unwrap();
        let mut raw = Vec::new();
        for e in &embs {
            let mut score = 0.0;
            for r in 0..16 {
                let mut acc = 0.0;
                for c in 0..16 {
                    acc += weights.w.get(r, c) * e[c];
                }
                score += weights.u.data[r] * libm::tanh(acc);
            }
            raw.push(score);
        }
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = raw.iter().map(|&s| libm::exp(s - max)).collect();
        let z: f64 = exps.iter().sum();
        for (g, e) in got.iter().zip(&exps) {
            assert!((g - e / z).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_u_keeps_the_argmax() {
        let (model, prompts, vocab) = setup();
        let mut weights = SummaryWeights::init(16, 23);
        let d = doc("Alpha beta one. Gamma delta two. Epsilon zeta three. Eta theta four.");
        let before = attention_scores(&d, &weights, &model, &prompts, &vocab).unwrap();
        for v in &mut weights.u.data {
            *v *= 7.5;
        }
        let after = attention_scores(&d, &weights, &model, &prompts, &vocab).unwrap();
        let argmax = |w: &[f64]| {
            w.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&before), argmax(&after));
    }

    #[test]
    fn extraction_respects_m_and_order() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights::init(16, 29);
        let d = doc("Alpha beta one. Gamma delta two. Epsilon zeta three. Eta theta four. Iota kappa five.");
        let s = extract_summary(&d, &weights, &model, &prompts, &vocab, 2).unwrap();
        assert_eq!(s.selected.len(), 2);
        assert!(s.selected.windows(2).all(|w| w[0] < w[1]));
        // Short documents return everything.
        let short = doc("Alpha beta one. Gamma delta two.");
        let s = extract_summary(&short, &weights, &model, &prompts, &vocab, 5).unwrap();
        assert_eq!(s.selected, alloc::vec![0, 1]);
        assert_eq!(s.text, "Alpha beta one. Gamma delta two.");
    }

    #[test]
    fn contextualize_prepends_summary() {
        let chunk = Chunk {
            chunk_id: "d#0".into(),
            doc_id: "d".into(),
            text: "C.".into(),
            token_start: 0,
            token_end: 1,
            ordinal: 0,
        };
        let summary = Summary {
            doc_id: "d".into(),
            selected: alloc::vec![0],
            text: "S.".into(),
            weights: alloc::vec![1.0],
        };
        assert_eq!(contextualize_chunk(&chunk, &summary).unwrap(), "S.\n\nC.");
        assert_eq!(
            contextualize_chunk(&chunk, &Summary::empty("d")).unwrap(),
            "C."
        );
        let other = Summary::empty("other");
        assert!(matches!(
            contextualize_chunk(&chunk, &other),
            Err(SummarizerError::DocMismatch { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_detected() {
        let (model, prompts, vocab) = setup();
        let weights = SummaryWeights::init(8, 3);
        assert!(matches!(
            attention_scores(&doc("a b c."), &weights, &model, &prompts, &vocab),
            Err(SummarizerError::DimMismatch { .. })
        ));
    }

    fn fixed_docs(dim: usize, seed: u64) -> Vec<(Tensor, Tensor)> {
        let mut r = rng::substream(seed, &[0xd0c5]);
        (0..3)
            .map(|_| {
                let mut e = Tensor::randn(4, dim, 1.0, &mut r);
                for row in 0..4 {
                    let n = crate::tensor::l2_norm(e.row(row));
                    for v in e.row_mut(row) {
                        *v /= n;
                    }
                }
                let mut d = Tensor::randn(1, dim, 1.0, &mut r);
                let n = crate::tensor::l2_norm(&d.data);
                for v in &mut d.data {
                    *v /= n;
                }
                (e, d)
            })
            .collect()
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let dim = 5;
        let docs = fixed_docs(dim, 31);
        let weights = SummaryWeights::init(dim, 37);
        let (_, gw, gu) = summarizer_objective(&weights, &docs);
        let h = 1e-4;
        let eval = |weights: &SummaryWeights| summarizer_objective(weights, &docs).0;
        for i in 0..weights.w.len() {
            let mut plus = weights.clone();
            plus.w.data[i] += h;
            let mut minus = weights.clone();
            minus.w.data[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = gw.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-3, "w[{i}]: analytic {a} numeric {numeric}");
        }
        for i in 0..weights.u.len() {
            let mut plus = weights.clone();
            plus.u.data[i] += h;
            let mut minus = weights.clone();
            minus.u.data[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = gu.data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-3, "u[{i}]: analytic {a} numeric {numeric}");
        }
    }

    #[test]
    fn training_is_monotone_and_deterministic() {
        let (model, prompts, vocab) = setup();
        let docs = alloc::vec![
            Document {
                doc_id: "a".into(),
                title: String::new(),
                text: "Alpha beta one. Gamma delta two. Epsilon zeta three.".into(),
                metadata: BTreeMap::new(),
            },
            Document {
                doc_id: "b".into(),
                title: String::new(),
                text: "Eta theta four. Iota kappa five. Lambda mu six.".into(),
                metadata: BTreeMap::new(),
            },
        ];
        let corpus = Corpus::new(docs).unwrap();
        let t1 = train_summarizer(&corpus, &model, &prompts, &vocab, 8, 0.05, 3).unwrap();
        assert_eq!(t1.objective_log.len(), 8);
        for w in t1.objective_log.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "objective decreased: {:?}", w);
        }
        let t2 = train_summarizer(&corpus, &model, &prompts, &vocab, 8, 0.05, 3).unwrap();
        assert!(t1.weights.w.bits_eq(&t2.weights.w));
        assert!(t1.weights.u.bits_eq(&t2.weights.u));
        // Zero epochs return the seeded init unchanged.
        let t0 = train_summarizer(&corpus, &model, &prompts, &vocab, 0, 0.05, 3).unwrap();
        assert!(t0.weights.w.bits_eq(&SummaryWeights::init(16, 3).w));
        assert!(t0.objective_log.is_empty());
    }
}
