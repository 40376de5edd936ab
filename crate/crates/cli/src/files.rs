//! File formats: JSONL for corpora, chunks, queries and summaries; the TREC
//! conventions for qrels and run files; JSON for reports; the binary
//! containers for checkpoints and indexes.
//!
//! Writers always create parent directories and produce byte-deterministic
//! output; no function here ever rewrites an input in place.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use techembed_core::container::Checkpoint;
use techembed_core::corpus::{Chunk, Corpus};
use techembed_core::eval::{JudgmentLevel, MetricsReport, Qrels, RunFile};
use techembed_core::index::VectorIndex;
use techembed_core::querygen::SyntheticQuery;
use techembed_core::summarizer::Summary;

pub const RUN_TAG: &str = "techembed";

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    Corpus::from_jsonl(&content).with_context(|| format!("parsing corpus {}", path.display()))
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    let mut out = String::new();
    for chunk in chunks {
        out.push_str(&serde_json::to_string(chunk)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_queries(path: &Path, queries: &[SyntheticQuery]) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_queries(path: &Path) -> Result<Vec<SyntheticQuery>> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading queries {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: SyntheticQuery = serde_json::from_str(line)
            .with_context(|| format!("{}: line {} is not a query record", path.display(), idx + 1))?;
        if q.text.trim().is_empty() {
            bail!("{}: line {} has an empty query text", path.display(), idx + 1);
        }
        out.push(q);
    }
    Ok(out)
}

/// Summary records as written to disk; attention weights stay internal.
#[derive(Debug, Serialize, Deserialize)]
struct SummaryRecord {
    doc_id: String,
    selected: Vec<usize>,
    text: String,
}

pub fn write_summaries(path: &Path, summaries: &[Summary]) -> Result<()> {
    let mut out = String::new();
    for s in summaries {
        let record = SummaryRecord {
            doc_id: s.doc_id.clone(),
            selected: s.selected.clone(),
            text: s.text.clone(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_summaries(path: &Path) -> Result<Vec<Summary>> {
    let content = fs::read_to_string(path)
        .with_context(|| format!("reading summaries {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SummaryRecord = serde_json::from_str(line).with_context(|| {
            format!("{}: line {} is not a summary record", path.display(), idx + 1)
        })?;
        out.push(Summary {
            doc_id: record.doc_id,
            selected: record.selected,
            text: record.text,
            weights: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_qrels(path: &Path, level: JudgmentLevel) -> Result<Qrels> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading qrels {}", path.display()))?;
    Qrels::from_trec(&content, level).with_context(|| format!("parsing qrels {}", path.display()))
}

pub fn qrels_lines(pairs: impl IntoIterator<Item = (String, String)>) -> String {
    let mut out = String::new();
    for (query_id, target_id) in pairs {
        out.push_str(&format!("{query_id} 0 {target_id} 1\n"));
    }
    out
}

/// Serializes a run in the six-column TREC convention:
/// `query_id Q0 target_id rank score tag`.
pub fn run_to_trec(run: &RunFile) -> String {
    let mut out = String::new();
    for (query_id, ranked) in run.iter() {
        for (rank, (target_id, score)) in ranked.iter().enumerate() {
            out.push_str(&format!(
                "{query_id} Q0 {target_id} {} {score} {RUN_TAG}\n",
                rank + 1
            ));
        }
    }
    out
}

pub fn read_run(path: &Path) -> Result<RunFile> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading run {}", path.display()))?;
    let mut grouped: std::collections::BTreeMap<String, Vec<(String, f64)>> = Default::default();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            bail!(
                "{}: line {} has {} fields, expected 6",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        let score: f64 = fields[4]
            .parse()
            .with_context(|| format!("{}: line {} score", path.display(), idx + 1))?;
        grouped
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[2].to_string(), score));
    }
    let mut run = RunFile::new();
    for (query_id, ranked) in grouped {
        run.insert(&query_id, ranked)?;
    }
    Ok(run)
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    serde_json::from_str(&content).with_context(|| format!("parsing report {}", path.display()))
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_bytes(path, &checkpoint.encode())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes =
        fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Checkpoint::decode(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))
}

pub fn write_index(path: &Path, index: &VectorIndex) -> Result<()> {
    write_bytes(path, &index.encode())
}

pub fn read_index(path: &Path) -> Result<VectorIndex> {
    let bytes = fs::read(path).with_context(|| format!("reading index {}", path.display()))?;
    VectorIndex::decode(&bytes).with_context(|| format!("decoding index {}", path.display()))
}
