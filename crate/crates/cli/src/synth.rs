//! Deterministic synthetic retrieval benchmark.
//!
//! Generates a corpus of technical-sounding documents with a known
//! relevance structure, a query set split into train/test, and matching
//! qrels. The construction gives the pipeline's components something to
//! prove:
//!
//! * Documents come in groups that share the vocabulary of one designated
//!   "target" chunk, so those chunks are mutually confusable across
//!   documents.
//! * Every sentence except the two inside the target chunk carries a
//!   document-global tag term. 30% of the queries ask about target-chunk
//!   content qualified by that tag: the tag appears in any 3-sentence
//!   summary of the document (at most two sentences lack it) but never in
//!   the target chunk itself, so those queries are only answerable when
//!   summaries provide document-level context at index time.
//! * A subset of queries is labeled as real user queries; they cover only
//!   the first half of each document, which is what the
//!   no-synthetic-queries ablation trains on.
//!
//! Everything is a pure function of the seed.

use std::path::{Path, PathBuf};

use anyhow::Result;

use techembed_core::corpus::{ChunkParams, Corpus};
use techembed_core::encoder::EncoderConfig;
use techembed_core::querygen::{query_request, Provenance, SyntheticQuery};
use techembed_core::rng;
use techembed_core::textgen::{template_expand, TemplateBackend, TextGenerator};

use crate::files;

pub const N_DOCS: usize = 60;
pub const N_GROUPS: usize = 5;
const SENTENCES_PER_DOC: usize = 8;
const WORDS_PER_SENTENCE: usize = 15;
/// Sentence ordinals forming the target chunk (chunk 2 of 4).
const TARGET_SENTENCES: (usize, usize) = (4, 5);
const QUERIES_PER_DOC: usize = 10;

const GROUP_THEMES: [&str; N_GROUPS] = ["latch", "cache", "sensor", "router", "mixer"];
const GROUP_SUFFIXES: [&str; 6] = ["margin", "bias", "drift", "gain", "slope", "skew"];
const DOC_SUFFIXES: [&str; 6] = ["cfg", "clk", "bus", "map", "ref", "ctl"];
const FILLER_NOUNS: [&str; 10] = [
    "register", "buffer", "module", "channel", "window", "budget", "threshold", "profile",
    "mode", "phase",
];
const FILLER_VERBS: [&str; 8] = [
    "tracks", "limits", "drives", "updates", "samples", "controls", "gates", "holds",
];

fn global_tag(doc: usize) -> String {
    format!("proj{doc:02}")
}

fn group_terms(group: usize) -> Vec<String> {
    GROUP_SUFFIXES
        .iter()
        .map(|s| format!("{}{}", GROUP_THEMES[group], s))
        .collect()
}

fn doc_terms(doc: usize) -> Vec<String> {
    DOC_SUFFIXES
        .iter()
        .map(|s| format!("unit{doc:02}{s}"))
        .collect()
}

/// One context sentence: exactly 15 words, tag included, then a period.
fn context_sentence(doc: usize, sentence: usize, seed: u64) -> String {
    let mut r = rng::substream(seed, &[0xc0, doc as u64, sentence as u64]);
    let g = global_tag(doc);
    let dt = doc_terms(doc);
    let d0 = &dt[rng::index(&mut r, dt.len())];
    let d1 = &dt[rng::index(&mut r, dt.len())];
    let n0 = FILLER_NOUNS[rng::index(&mut r, FILLER_NOUNS.len())];
    let n1 = FILLER_NOUNS[rng::index(&mut r, FILLER_NOUNS.len())];
    let v0 = FILLER_VERBS[rng::index(&mut r, FILLER_VERBS.len())];
    let words: Vec<String> = match sentence % 4 {
        0 => format!("the {g} platform keeps the {d0} {n0} aligned with the {d1} {n1} inside the {g}"),
        1 => format!("every {n0} update on {g} {v0} the {d0} path before the {d1} {n1} settles down"),
        2 => format!("{g} owners review the {d0} {n0} while the {n1} report for {g} stays fully current"),
        _ => format!("inside {g} the {d0} met its {n0} target and the {d1} {n1} passed review today"),
    }
    .split_whitespace()
    .map(str::to_string)
    .collect();
    debug_assert_eq!(words.len(), WORDS_PER_SENTENCE);
    format!("{}.", words.join(" "))
}

/// A target sentence: group vocabulary plus one document term, no tag.
fn target_sentence(doc: usize, sentence: usize, seed: u64) -> String {
    let mut r = rng::substream(seed, &[0x7a, doc as u64, sentence as u64]);
    let terms = group_terms(doc % N_GROUPS);
    let pick = |r: &mut rng::Rng, offset: usize| terms[(rng::index(r, terms.len()) + offset) % terms.len()].clone();
    let t0 = pick(&mut r, 0);
    let t1 = pick(&mut r, 1);
    let t2 = pick(&mut r, 2);
    let t3 = pick(&mut r, 3);
    let dt = doc_terms(doc);
    let d = &dt[rng::index(&mut r, dt.len())];
    let v = FILLER_VERBS[rng::index(&mut r, FILLER_VERBS.len())];
    let words: Vec<String> = if sentence % 2 == 0 {
        format!("the {t0} window {v} {t1} against the {t2} budget while {t3} holds the {d} value")
    } else {
        format!("tuning {t0} requires the {t1} limit to stay below the {t2} mark near {t3} {d}")
    }
    .split_whitespace()
    .map(str::to_string)
    .collect();
    debug_assert_eq!(words.len(), WORDS_PER_SENTENCE);
    format!("{}.", words.join(" "))
}

fn document_text(doc: usize, seed: u64) -> String {
    (0..SENTENCES_PER_DOC)
        .map(|s| {
            if s == TARGET_SENTENCES.0 || s == TARGET_SENTENCES.1 {
                target_sentence(doc, s, seed)
            } else {
                context_sentence(doc, s, seed)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

const TAG_QUERY_TEMPLATES: [&str; 3] = [
    "in {g}, what does {t} control?",
    "how is {t} tuned in {g}?",
    "which {t} limit applies inside {g}?",
];

/// The complete generated benchmark.
pub struct SynthBenchmark {
    pub corpus_jsonl: String,
    pub train_queries: Vec<SyntheticQuery>,
    pub test_queries: Vec<SyntheticQuery>,
    /// TREC qrels covering every query (train and test).
    pub qrels_text: String,
    pub chunking: ChunkParams,
    pub encoder: EncoderConfig,
}

/// Benchmark training schedule, matched to the corpus size.
pub struct SynthTrainPlan {
    pub pretrain_epochs: usize,
    pub tune_epochs: usize,
    pub batch_size: usize,
    pub summarizer_epochs: usize,
    pub summarizer_lr: f64,
    pub summary_sentences: usize,
}

pub fn train_plan() -> SynthTrainPlan {
    SynthTrainPlan {
        pretrain_epochs: 10,
        tune_epochs: 8,
        batch_size: 16,
        summarizer_epochs: 12,
        summarizer_lr: 0.05,
        summary_sentences: 3,
    }
}

pub fn encoder_config(seed: u64) -> EncoderConfig {
    EncoderConfig {
        dim: 32,
        vocab_size: 2048,
        layers: 2,
        heads: 4,
        max_seq: 96,
        prompt_len: 4,
        temperature: 0.05,
        seed,
        shared_base: true,
    }
}

pub fn chunk_params() -> ChunkParams {
    ChunkParams {
        chunk_size: 32,
        overlap: 0,
    }
}

/// Generates the benchmark for a seed.
pub fn generate(seed: u64) -> SynthBenchmark {
    let mut corpus_jsonl = String::new();
    for doc in 0..N_DOCS {
        let record = serde_json::json!({
            "doc_id": format!("doc{doc:02}"),
            "title": format!("notes for {}", global_tag(doc)),
            "text": document_text(doc, seed),
        });
        corpus_jsonl.push_str(&record.to_string());
        corpus_jsonl.push('\n');
    }
    let corpus = Corpus::from_jsonl(&corpus_jsonl).expect("generated corpus is valid");
    let chunks = corpus.chunks(chunk_params()).expect("generated corpus chunks");
    debug_assert_eq!(chunks.len(), N_DOCS * 4);

    let backend = TemplateBackend::new();
    let mut all: Vec<(usize, SyntheticQuery)> = Vec::new(); // (query index within doc, query)
    for doc in 0..N_DOCS {
        let doc_id = format!("doc{doc:02}");
        let target_chunk_id = format!("{doc_id}#2");
        let terms = group_terms(doc % N_GROUPS);
        // Three tag queries against the target chunk.
        for qi in 0..3 {
            let mut slots = std::collections::BTreeMap::new();
            slots.insert("g".to_string(), global_tag(doc));
            slots.insert("t".to_string(), terms[(doc + qi * 2) % terms.len()].clone());
            let text = template_expand(
                TAG_QUERY_TEMPLATES[qi % TAG_QUERY_TEMPLATES.len()],
                &slots,
                rng::mix(seed, &[0x9, doc as u64, qi as u64]),
            )
            .expect("tag query template expands");
            all.push((
                qi,
                SyntheticQuery {
                    query_id: format!("{target_chunk_id}::q{qi}"),
                    text,
                    source_chunk_id: target_chunk_id.clone(),
                    provenance: Provenance::Template,
                },
            ));
        }
        // Seven content queries over the context chunks: three for chunk 0,
        // two each for chunks 1 and 3. Chunks 0 and 1 are the "real" set.
        let spread: [(usize, usize); 7] =
            [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (3, 0), (3, 1)];
        for (qi, (chunk_ord, sub)) in spread.iter().enumerate() {
            let chunk = &chunks[doc * 4 + chunk_ord];
            let req = query_request(chunk, rng::mix(seed, &[0xa, doc as u64, qi as u64]));
            let text = backend.generate(&req).expect("template backend cannot fail");
            let provenance = if *chunk_ord <= 1 {
                Provenance::Real
            } else {
                Provenance::Template
            };
            all.push((
                3 + qi,
                SyntheticQuery {
                    query_id: format!("{}::q{sub}", chunk.chunk_id),
                    text,
                    source_chunk_id: chunk.chunk_id.clone(),
                    provenance,
                },
            ));
        }
    }
    debug_assert_eq!(all.len(), N_DOCS * QUERIES_PER_DOC);

    // Hold out two queries per document as the test set: 30% of the test
    // queries are tag queries, matching their share of the pool.
    let mut train_queries = Vec::new();
    let mut test_queries = Vec::new();
    for (pos, (qi, query)) in all.into_iter().enumerate() {
        let doc = pos / QUERIES_PER_DOC;
        let held_out = if doc % N_GROUPS < 3 {
            // One tag query and one late-chunk content query.
            *qi == 2 || *qi == 9
        } else {
            // Two context-chunk content queries.
            *qi == 5 || *qi == 6
        };
        if held_out {
            test_queries.push(query);
        } else {
            train_queries.push(query);
        }
    }

    let qrels_text = files::qrels_lines(
        train_queries
            .iter()
            .chain(test_queries.iter())
            .map(|q| (q.query_id.clone(), q.source_chunk_id.clone())),
    );

    SynthBenchmark {
        corpus_jsonl,
        train_queries,
        test_queries,
        qrels_text,
        chunking: chunk_params(),
        encoder: encoder_config(seed),
    }
}

/// File layout of a benchmark written to disk.
pub struct SynthPaths {
    pub corpus: PathBuf,
    pub train_queries: PathBuf,
    pub test_queries: PathBuf,
    pub qrels: PathBuf,
    pub config: PathBuf,
}

/// Writes the benchmark plus a ready-to-run pipeline config into a
/// directory.
pub fn write_to_dir(bench: &SynthBenchmark, dir: &Path, seed: u64) -> Result<SynthPaths> {
    let paths = SynthPaths {
        corpus: dir.join("corpus.jsonl"),
        train_queries: dir.join("train_queries.jsonl"),
        test_queries: dir.join("test_queries.jsonl"),
        qrels: dir.join("qrels.txt"),
        config: dir.join("config.json"),
    };
    files::write_text(&paths.corpus, &bench.corpus_jsonl)?;
    files::write_queries(&paths.train_queries, &bench.train_queries)?;
    files::write_queries(&paths.test_queries, &bench.test_queries)?;
    files::write_text(&paths.qrels, &bench.qrels_text)?;
    let plan = train_plan();
    let config = serde_json::json!({
        "seed": seed,
        "paths": {
            "corpus": paths.corpus,
            "queries": paths.test_queries,
            "train_queries": paths.train_queries,
            "qrels": paths.qrels,
            "out": dir.join("out"),
        },
        "chunking": {"chunk_size": bench.chunking.chunk_size, "overlap": bench.chunking.overlap},
        "encoder": {
            "dim": bench.encoder.dim,
            "vocab_size": bench.encoder.vocab_size,
            "layers": bench.encoder.layers,
            "heads": bench.encoder.heads,
            "max_seq": bench.encoder.max_seq,
            "prompt_len": bench.encoder.prompt_len,
            "temperature": bench.encoder.temperature,
        },
        "summarizer": {
            "sentences": plan.summary_sentences,
            "epochs": plan.summarizer_epochs,
            "lr": plan.summarizer_lr,
        },
        "train": {
            "pretrain_epochs": plan.pretrain_epochs,
            "tune_epochs": plan.tune_epochs,
            "batch_size": plan.batch_size,
        },
        "eval": {"k": [5, 10, 15, 20], "level": "chunk", "use_summaries": true},
    });
    files::write_text(&paths.config, &format!("{}\n", serde_json::to_string_pretty(&config)?))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use techembed_core::tokenizer::split_surfaces;

    #[test]
    fn benchmark_shape_and_determinism() {
        let a = generate(42);
        let b = generate(42);
        assert_eq!(a.corpus_jsonl, b.corpus_jsonl);
        assert_eq!(a.train_queries, b.train_queries);
        assert_eq!(a.test_queries, b.test_queries);

        let corpus = Corpus::from_jsonl(&a.corpus_jsonl).unwrap();
        assert!(corpus.len() >= 50);
        let chunks = corpus.chunks(a.chunking).unwrap();
        assert!(chunks.len() >= 200);
        assert_eq!(a.train_queries.len() + a.test_queries.len(), N_DOCS * QUERIES_PER_DOC);
        // 20% held out.
        assert_eq!(a.test_queries.len(), N_DOCS * QUERIES_PER_DOC / 5);
    }

    #[test]
    fn every_sentence_is_sixteen_tokens() {
        let text = document_text(7, 42);
        for sentence in text.split(". ") {
            let n = split_surfaces(sentence).len();
            assert!(n == 16 || n == 15, "sentence has {n} tokens: {sentence}");
        }
    }

    #[test]
    fn tag_stays_out_of_target_chunk_and_queries_use_it() {
        let bench = generate(42);
        let corpus = Corpus::from_jsonl(&bench.corpus_jsonl).unwrap();
        let chunks = corpus.chunks(bench.chunking).unwrap();
        for doc in 0..N_DOCS {
            let tag = global_tag(doc);
            for chunk in &chunks[doc * 4..(doc + 1) * 4] {
                let has_tag = chunk.text.contains(&tag);
                if chunk.ordinal == 2 {
                    assert!(!has_tag, "target chunk must not carry the tag: {}", chunk.chunk_id);
                } else {
                    assert!(has_tag, "context chunk missing the tag: {}", chunk.chunk_id);
                }
            }
        }
        // Tag queries mention tag and target content; 30% of all queries.
        let tag_queries: Vec<&SyntheticQuery> = bench
            .train_queries
            .iter()
            .chain(&bench.test_queries)
            .filter(|q| q.source_chunk_id.ends_with("#2"))
            .collect();
        assert_eq!(tag_queries.len(), N_DOCS * 3);
        for q in &tag_queries {
            let doc: usize = q.source_chunk_id[3..5].parse().unwrap();
            assert!(q.text.contains(&global_tag(doc)), "{}", q.text);
        }
        let test_tag = bench
            .test_queries
            .iter()
            .filter(|q| q.source_chunk_id.ends_with("#2"))
            .count();
        assert_eq!(test_tag * 10, bench.test_queries.len() * 3, "30% of test queries are tag queries");
    }

    #[test]
    fn real_queries_cover_only_early_chunks() {
        let bench = generate(42);
        for q in bench.train_queries.iter().chain(&bench.test_queries) {
            let real = matches!(q.provenance, Provenance::Real);
            let ord: usize = q.source_chunk_id.split('#').next_back().unwrap().parse().unwrap();
            assert_eq!(real, ord <= 1, "{} {:?}", q.query_id, q.provenance);
        }
    }
}
