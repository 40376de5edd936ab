//! Pipeline orchestration: turning queries into training pairs, the
//! two-stage training flow, scored retrieval runs, and the four-arm
//! ablation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use techembed_core::container::Checkpoint;
use techembed_core::corpus::{Chunk, Corpus};
use techembed_core::encoder::{encode_query, TrainPair};
use techembed_core::eval::{evaluate_with_echo, MetricsReport, Qrels, RunFile};
use techembed_core::index::{build_index, VectorIndex};
use techembed_core::querygen::{Provenance, SyntheticQuery};
use techembed_core::summarizer::{extract_summary, train_summarizer, Summary};
use techembed_core::tokenizer::Vocab;
use techembed_core::train::{prompt_tune, pretrain, TrainConfig, TrainLog};

use crate::config::PipelineConfig;
use crate::files;

/// Builds (query, positive chunk) training pairs. Every query must name an
/// existing chunk; `real_only` keeps just the real-user subset.
pub fn build_pairs(
    queries: &[SyntheticQuery],
    chunks: &[Chunk],
    vocab: &Vocab,
    real_only: bool,
) -> Result<Vec<TrainPair>> {
    let by_id: BTreeMap<&str, &Chunk> = chunks.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
    let mut pairs = Vec::new();
    for q in queries {
        if real_only && !matches!(q.provenance, Provenance::Real) {
            continue;
        }
        let chunk = by_id.get(q.source_chunk_id.as_str()).with_context(|| {
            format!(
                "query {:?} references unknown chunk {:?}",
                q.query_id, q.source_chunk_id
            )
        })?;
        pairs.push(TrainPair {
            query_ids: vocab.encode(&q.text),
            doc_ids: vocab.encode(&chunk.text),
            chunk_id: chunk.chunk_id.clone(),
        });
    }
    if pairs.is_empty() {
        bail!("no training pairs (real_only={real_only})");
    }
    Ok(pairs)
}

/// Extracts one summary per document with the checkpoint's summarizer.
pub fn extract_summaries(
    corpus: &Corpus,
    checkpoint: &Checkpoint,
    sentences: usize,
) -> Result<Vec<Summary>> {
    let weights = checkpoint
        .summarizer
        .as_ref()
        .context("checkpoint has no summarizer weights; run `summarize` first")?;
    let mut out = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        out.push(extract_summary(
            doc,
            weights,
            &checkpoint.model,
            &checkpoint.prompts,
            &checkpoint.vocab,
            sentences,
        )?);
    }
    Ok(out)
}

/// Stage logs of a full training run.
pub struct PipelineLogs {
    pub pretrain: TrainLog,
    pub summarizer_objective: Vec<f64>,
    pub tune: TrainLog,
}

/// Trained artifacts of one pipeline pass.
pub struct TrainedPipeline {
    /// State after base training and summarizer training, before tuning.
    pub pretrained: Checkpoint,
    /// State after prompt tuning.
    pub tuned: Checkpoint,
    pub logs: PipelineLogs,
}

/// Runs base training, summarizer training, and prompt tuning in sequence
/// from a fresh seeded state.
pub fn train_pipeline(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    chunks: &[Chunk],
    train_queries: &[SyntheticQuery],
    real_only: bool,
) -> Result<TrainedPipeline> {
    let vocab = Vocab::from_texts(
        corpus
            .documents()
            .iter()
            .map(|d| d.text.as_str())
            .chain(train_queries.iter().map(|q| q.text.as_str())),
        cfg.encoder.vocab_size,
    );
    let pairs = build_pairs(train_queries, chunks, &vocab, real_only)?;

    let mut checkpoint = Checkpoint::init(cfg.encoder.clone(), vocab)?;
    let pretrain_log = pretrain(
        &mut checkpoint.model,
        &checkpoint.prompts,
        &pairs,
        &TrainConfig {
            epochs: cfg.pretrain_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.pretrain_lr,
            seed: cfg.seed,
        },
    )?;

    let summarizer = train_summarizer(
        corpus,
        &checkpoint.model,
        &checkpoint.prompts,
        &checkpoint.vocab,
        cfg.summarizer_epochs,
        cfg.summarizer_lr,
        cfg.seed,
    )?;
    checkpoint.summarizer = Some(summarizer.weights);
    let pretrained = checkpoint.clone();

    let tune_log = prompt_tune(
        &checkpoint.model,
        &mut checkpoint.prompts,
        &pairs,
        &TrainConfig {
            epochs: cfg.tune_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.tune_lr,
            seed: cfg.seed.wrapping_add(1),
        },
    )?;
    checkpoint.prompt_tuned = true;

    Ok(TrainedPipeline {
        pretrained,
        tuned: checkpoint,
        logs: PipelineLogs {
            pretrain: pretrain_log,
            summarizer_objective: summarizer.objective_log,
            tune: tune_log,
        },
    })
}

/// Builds the retrieval index for a checkpoint, extracting summaries when
/// requested.
pub fn index_for(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    chunks: &[Chunk],
    checkpoint: &Checkpoint,
    use_summaries: bool,
) -> Result<VectorIndex> {
    let summaries = if use_summaries {
        Some(extract_summaries(corpus, checkpoint, cfg.summary_sentences)?)
    } else {
        None
    };
    Ok(build_index(chunks, summaries.as_deref(), checkpoint, use_summaries)?)
}

/// Encodes queries, searches the index, and scores the run.
pub fn score_queries(
    cfg: &PipelineConfig,
    checkpoint: &Checkpoint,
    index: &VectorIndex,
    queries: &[SyntheticQuery],
    qrels: &Qrels,
    echo: BTreeMap<String, String>,
) -> Result<(MetricsReport, RunFile)> {
    let depth = cfg.k_values.iter().copied().max().unwrap_or(10);
    let mut run = RunFile::new();
    for q in queries {
        let ids = checkpoint.vocab.encode(&q.text);
        let e = encode_query(
            &ids,
            &checkpoint.model,
            &checkpoint.prompts,
            checkpoint.prompt_tuned,
        )?;
        let hits = index.search(&e, depth)?;
        run.insert(&q.query_id, hits)?;
    }
    let report = evaluate_with_echo(&run, qrels, &cfg.k_values, echo)?;
    Ok((report, run))
}

/// One retrieval experiment against explicit artifacts: loads (or builds)
/// the index, scores the configured query set, and writes the run file and
/// report under the output directory.
pub fn run_experiment(cfg: &PipelineConfig) -> Result<(MetricsReport, RunFile)> {
    let checkpoint_path = cfg.require(&cfg.checkpoint, "/paths/checkpoint")?;
    let queries_path = cfg.require(&cfg.queries, "/paths/queries")?;
    let qrels_path = cfg.require(&cfg.qrels, "/paths/qrels")?;
    let checkpoint = files::read_checkpoint(checkpoint_path)?;
    checkpoint.ensure_dim(&cfg.encoder)?;
    let queries = files::read_queries(queries_path)?;
    let qrels = files::read_qrels(qrels_path, cfg.level)?;

    let mut echo = BTreeMap::new();
    echo.insert("use_summaries".to_string(), cfg.use_summaries.to_string());
    echo.insert("checkpoint".to_string(), checkpoint.fingerprint());
    echo.insert("prompt_tuned".to_string(), checkpoint.prompt_tuned.to_string());

    let index = match &cfg.index {
        Some(path) if path.exists() => {
            let index = files::read_index(path)?;
            index.verify_fingerprint(&checkpoint, cfg.allow_mismatch)?;
            echo.insert("index".to_string(), path.display().to_string());
            index
        }
        _ => {
            let corpus_path = cfg.require(&cfg.corpus, "/paths/corpus")?;
            let corpus = files::read_corpus(corpus_path)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            echo.insert("index".to_string(), "built in memory".to_string());
            index_for(cfg, &corpus, &chunks, &checkpoint, cfg.use_summaries)?
        }
    };

    let (report, run) = score_queries(cfg, &checkpoint, &index, &queries, &qrels, echo)?;
    files::write_text(&cfg.out.join("run.trec"), &files::run_to_trec(&run))?;
    files::write_report(&cfg.out.join("report.json"), &report)?;
    Ok((report, run))
}

/// Ablation arm names, in report order.
pub const ARMS: [&str; 4] = ["no-tuning", "no-synth-queries", "no-summaries", "full"];

pub struct AblationOutcome {
    /// Reports keyed by arm name.
    pub reports: BTreeMap<String, MetricsReport>,
    pub logs: PipelineLogs,
}

/// Runs the four-arm ablation end to end, sharing the seed and every other
/// setting across arms:
///
/// * `no-tuning`: the pre-tune checkpoint, summaries on;
/// * `no-synth-queries`: trained on real-provenance pairs only;
/// * `no-summaries`: the full checkpoint over a summary-free index;
/// * `full`: the full checkpoint over the summary index.
pub fn run_ablation(cfg: &PipelineConfig) -> Result<AblationOutcome> {
    let corpus_path = cfg.require(&cfg.corpus, "/paths/corpus")?;
    let qrels_path = cfg.require(&cfg.qrels, "/paths/qrels")?;
    let eval_path = cfg.require(&cfg.queries, "/paths/queries")?;
    let train_path = cfg
        .train_query_path()
        .map(Path::to_path_buf)
        .context("ablation needs a query set (paths.queries or paths.train_queries)")?;

    let corpus = files::read_corpus(corpus_path)?;
    let chunks = corpus.chunks(cfg.chunking)?;
    let train_queries = files::read_queries(&train_path)?;
    let eval_queries = files::read_queries(eval_path)?;
    let qrels = files::read_qrels(qrels_path, cfg.level)?;

    let full = train_pipeline(cfg, &corpus, &chunks, &train_queries, false)?;
    let real = train_pipeline(cfg, &corpus, &chunks, &train_queries, true)?;

    let mut arms: BTreeMap<String, (Checkpoint, bool)> = BTreeMap::new();
    arms.insert(ARMS[0].to_string(), (full.pretrained.clone(), true));
    arms.insert(ARMS[1].to_string(), (real.tuned, true));
    arms.insert(ARMS[2].to_string(), (full.tuned.clone(), false));
    arms.insert(ARMS[3].to_string(), (full.tuned.clone(), true));

    let mut reports = BTreeMap::new();
    for (arm, (checkpoint, use_summaries)) in &arms {
        let index = index_for(cfg, &corpus, &chunks, checkpoint, *use_summaries)?;
        let mut echo = BTreeMap::new();
        echo.insert("arm".to_string(), arm.clone());
        echo.insert("use_summaries".to_string(), use_summaries.to_string());
        echo.insert("checkpoint".to_string(), checkpoint.fingerprint());
        let (report, run) = score_queries(cfg, checkpoint, &index, &eval_queries, &qrels, echo)?;
        files::write_text(
            &cfg.out.join(format!("run.{arm}.trec")),
            &files::run_to_trec(&run),
        )?;
        files::write_report(&cfg.out.join(format!("report.{arm}.json")), &report)?;
        reports.insert(arm.clone(), report);
    }
    Ok(AblationOutcome {
        reports,
        logs: full.logs,
    })
}
