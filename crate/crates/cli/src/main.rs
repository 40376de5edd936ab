//! `techembed` — one binary driving the whole retrieval pipeline.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on
//! runtime failures. Subcommands only create new files; inputs are never
//! rewritten in place.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use techembed::config::{ConfigError, Overrides, PipelineConfig};
use techembed::experiment;
use techembed::files;
use techembed::remote::RemoteBackend;
use techembed::report;
use techembed_core::container::Checkpoint;
use techembed_core::encoder::encode_query;
use techembed_core::querygen::{generate_queries, QuerygenError};
use techembed_core::summarizer::extract_summary;
use techembed_core::textgen::{TemplateBackend, TextGenerator};
use techembed_core::tokenizer::Vocab;
use techembed_core::train::{prompt_tune, TrainConfig};

#[derive(Parser)]
#[command(
    name = "techembed",
    about = "Technical-document retrieval pipeline: ingest, enrich, train, index, search, evaluate",
    version
)]
struct Cli {
    /// Pipeline configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every stochastic choice; required here or in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: "out" or the config's paths.out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Evaluation cutoffs, comma separated (e.g. "5,10,15,20").
    #[arg(long, global = true, value_name = "LIST")]
    k: Option<String>,
    /// Prefix chunks with document summaries at index time.
    #[arg(long, global = true, value_name = "BOOL")]
    use_summaries: Option<bool>,
    /// Generation backend: "template" (offline) or "remote".
    #[arg(long, global = true, value_name = "KIND")]
    backend: Option<String>,
    /// Serve an index even if its encoder fingerprint mismatches.
    #[arg(long, global = true)]
    allow_mismatch: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write its chunks.
    Ingest,
    /// Train summarizer weights and write per-document summaries.
    Summarize,
    /// Generate synthetic queries (and their qrels) from chunks.
    Genqueries,
    /// Train the encoder base on (query, chunk) pairs.
    Pretrain,
    /// Tune the soft prompts against a frozen base.
    Tune,
    /// Embed all chunks into a vector index.
    Index,
    /// Retrieve the top-k chunks for a free-text query.
    Search {
        /// The query text.
        query: String,
    },
    /// Score a query set against relevance judgments.
    Eval,
    /// Run the four-arm component ablation.
    Ablate,
    /// Render a metrics report as a table (and optionally an SVG chart).
    Report {
        /// Path of a report JSON produced by `eval` or `ablate`.
        metrics: PathBuf,
        /// Write an SVG bar chart of recall@k here.
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
}

fn parse_k_list(raw: &str) -> Result<Vec<usize>, ConfigError> {
    raw.split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| ConfigError::Invalid {
                pointer: "/eval/k".to_string(),
                reason: format!("{part:?} is not a positive integer"),
            })
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own message (help/version go to stdout).
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let overrides = {
        let k = match cli.k.as_deref().map(parse_k_list).transpose() {
            Ok(k) => k,
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(1);
            }
        };
        Overrides {
            seed: cli.seed,
            out: cli.out.clone(),
            k,
            use_summaries: cli.use_summaries,
            backend: cli.backend.clone(),
            allow_mismatch: cli.allow_mismatch,
        }
    };
    let cfg = match PipelineConfig::resolve(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };

    match run(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Configuration problems discovered later (missing paths) still
            // count as usage errors.
            if err.downcast_ref::<ConfigError>().is_some() {
                eprintln!("error: {err}");
                ExitCode::from(1)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(2)
            }
        }
    }
}

fn backend_for(cfg: &PipelineConfig) -> Result<Box<dyn TextGenerator>> {
    match cfg.backend.as_str() {
        "remote" => Ok(Box::new(RemoteBackend::from_env()?)),
        _ => Ok(Box::new(TemplateBackend::new())),
    }
}

fn run(command: &Command, cfg: &PipelineConfig) -> Result<()> {
    match command {
        Command::Ingest => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            let out = cfg.out.join("chunks.jsonl");
            files::write_chunks(&out, &chunks)?;
            println!(
                "ingested {} documents into {} chunks (chunk_size={}, overlap={}) -> {}",
                corpus.len(),
                chunks.len(),
                cfg.chunking.chunk_size,
                cfg.chunking.overlap,
                out.display()
            );
        }
        Command::Genqueries => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            let backend = backend_for(cfg)?;
            match generate_queries(&chunks, backend.as_ref(), cfg.n_per_chunk, cfg.seed) {
                Ok(queries) => {
                    let qpath = cfg.out.join("queries.jsonl");
                    files::write_queries(&qpath, &queries)?;
                    let qrels = files::qrels_lines(
                        queries
                            .iter()
                            .map(|q| (q.query_id.clone(), q.source_chunk_id.clone())),
                    );
                    let rpath = cfg.out.join("qrels.txt");
                    files::write_text(&rpath, &qrels)?;
                    println!(
                        "generated {} queries ({} per chunk) -> {} and {}",
                        queries.len(),
                        cfg.n_per_chunk,
                        qpath.display(),
                        rpath.display()
                    );
                }
                Err(QuerygenError::Backend {
                    resume_cursor,
                    partial,
                    source,
                }) => {
                    let partial_path = cfg.out.join("queries.partial.jsonl");
                    files::write_queries(&partial_path, &partial)?;
                    let cursor_path = cfg.out.join("resume.json");
                    files::write_text(
                        &cursor_path,
                        &format!("{{\"resume_cursor\": {resume_cursor}}}\n"),
                    )?;
                    bail!(
                        "backend failed at chunk {resume_cursor} ({source}); \
                         flushed {} queries to {} with cursor {}",
                        partial.len(),
                        partial_path.display(),
                        cursor_path.display()
                    );
                }
                Err(other) => return Err(other.into()),
            }
        }
        Command::Pretrain => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            let train_path = cfg
                .train_query_path()
                .ok_or_else(|| ConfigError::Invalid {
                    pointer: "/paths/queries".to_string(),
                    reason: "required by this subcommand".to_string(),
                })?;
            let queries = files::read_queries(train_path)?;
            let vocab = Vocab::from_texts(
                corpus
                    .documents()
                    .iter()
                    .map(|d| d.text.as_str())
                    .chain(queries.iter().map(|q| q.text.as_str())),
                cfg.encoder.vocab_size,
            );
            let pairs = experiment::build_pairs(&queries, &chunks, &vocab, false)?;
            let mut checkpoint = Checkpoint::init(cfg.encoder.clone(), vocab)?;
            let log = techembed_core::train::pretrain(
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
            let out = cfg.out.join("encoder.pretrained.temb");
            files::write_checkpoint(&out, &checkpoint)?;
            println!(
                "pretrained on {} pairs for {} epochs (loss {} -> {}) -> {}",
                pairs.len(),
                cfg.pretrain_epochs,
                log.initial().map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                log.final_loss().map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                out.display()
            );
        }
        Command::Summarize => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let ckpt_path = cfg.require(&cfg.checkpoint, "/paths/checkpoint")?;
            let mut checkpoint = files::read_checkpoint(ckpt_path)?;
            checkpoint.ensure_dim(&cfg.encoder)?;
            let trained = techembed_core::summarizer::train_summarizer(
                &corpus,
                &checkpoint.model,
                &checkpoint.prompts,
                &checkpoint.vocab,
                cfg.summarizer_epochs,
                cfg.summarizer_lr,
                cfg.seed,
            )?;
            checkpoint.summarizer = Some(trained.weights);
            let summaries: Vec<_> = corpus
                .documents()
                .iter()
                .map(|doc| {
                    extract_summary(
                        doc,
                        checkpoint.summarizer.as_ref().expect("just set"),
                        &checkpoint.model,
                        &checkpoint.prompts,
                        &checkpoint.vocab,
                        cfg.summary_sentences,
                    )
                })
                .collect::<Result<_, _>>()?;
            let spath = cfg.out.join("summaries.jsonl");
            files::write_summaries(&spath, &summaries)?;
            let cpath = cfg.out.join("encoder.summarizer.temb");
            files::write_checkpoint(&cpath, &checkpoint)?;
            let objective = trained
                .objective_log
                .last()
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into());
            println!(
                "trained summarizer over {} documents (objective {objective}) -> {} and {}",
                corpus.len(),
                spath.display(),
                cpath.display()
            );
        }
        Command::Tune => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            let ckpt_path = cfg.require(&cfg.checkpoint, "/paths/checkpoint")?;
            let mut checkpoint = files::read_checkpoint(ckpt_path)?;
            checkpoint.ensure_dim(&cfg.encoder)?;
            let train_path = cfg
                .train_query_path()
                .ok_or_else(|| ConfigError::Invalid {
                    pointer: "/paths/queries".to_string(),
                    reason: "required by this subcommand".to_string(),
                })?;
            let queries = files::read_queries(train_path)?;
            let pairs =
                experiment::build_pairs(&queries, &chunks, &checkpoint.vocab, false)?;
            let log = prompt_tune(
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
            let out = cfg.out.join("encoder.tuned.temb");
            files::write_checkpoint(&out, &checkpoint)?;
            println!(
                "tuned prompts on {} pairs for {} epochs (loss {} -> {}) -> {}",
                pairs.len(),
                cfg.tune_epochs,
                log.initial().map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                log.final_loss().map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                out.display()
            );
        }
        Command::Index => {
            let corpus = files::read_corpus(cfg.require(&cfg.corpus, "/paths/corpus")?)?;
            let chunks = corpus.chunks(cfg.chunking)?;
            let ckpt_path = cfg.require(&cfg.checkpoint, "/paths/checkpoint")?;
            let checkpoint = files::read_checkpoint(ckpt_path)?;
            checkpoint.ensure_dim(&cfg.encoder)?;
            let index =
                experiment::index_for(cfg, &corpus, &chunks, &checkpoint, cfg.use_summaries)?;
            let out = cfg.out.join("index.tidx");
            files::write_index(&out, &index)?;
            println!(
                "indexed {} chunks (dim {}, summaries {}) -> {}",
                index.len(),
                index.dim(),
                cfg.use_summaries,
                out.display()
            );
        }
        Command::Search { query } => {
            let index_path = cfg.require(&cfg.index, "/paths/index")?;
            let ckpt_path = cfg.require(&cfg.checkpoint, "/paths/checkpoint")?;
            let index = files::read_index(index_path)?;
            let checkpoint = files::read_checkpoint(ckpt_path)?;
            index.verify_fingerprint(&checkpoint, cfg.allow_mismatch)?;
            let k = cfg.k_values.first().copied().unwrap_or(10);
            let ids = checkpoint.vocab.encode(query);
            let embedding = encode_query(
                &ids,
                &checkpoint.model,
                &checkpoint.prompts,
                checkpoint.prompt_tuned,
            )?;
            for (rank, (chunk_id, score)) in index.search(&embedding, k)?.iter().enumerate() {
                println!("{:>3}  {score:.6}  {chunk_id}", rank + 1);
            }
        }
        Command::Eval => {
            let (report, _) = experiment::run_experiment(cfg)?;
            println!(
                "evaluated {} queries: map {:.4}, mrr {:.4} -> {}",
                report.per_query.len(),
                report.map,
                report.mrr,
                cfg.out.join("report.json").display()
            );
        }
        Command::Ablate => {
            let outcome = experiment::run_ablation(cfg)?;
            let table = report::render_comparison(&outcome.reports);
            files::write_text(&cfg.out.join("ablation.txt"), &table)?;
            print!("{table}");
            println!("reports written under {}", cfg.out.display());
        }
        Command::Report { metrics, svg } => {
            let report_data = files::read_report(metrics)?;
            print!("{}", report::render_table(&report_data));
            if let Some(svg_path) = svg {
                files::write_text(svg_path, &report::render_recall_svg(&report_data))?;
                println!("chart -> {}", svg_path.display());
            }
        }
    }
    Ok(())
}
