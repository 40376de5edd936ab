//! Retrieval evaluation: average precision, reciprocal rank, precision@K,
//! recall@K, and their means over a run.
//!
//! Judgments may be at chunk or document granularity. With document-level
//! judgments a ranked chunk list collapses to documents first: a document
//! ranks where its best chunk ranks and later chunks of it are skipped.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("cutoff K must be at least 1")]
    InvalidCutoff,
    #[error("run contains unjudged queries: {0:?}")]
    UnjudgedQueries(Vec<String>),
    #[error("run for query {query_id:?} ranks {target_id:?} twice")]
    DuplicateTarget { query_id: String, target_id: String },
    #[error("run for query {query_id:?} has increasing scores at rank {rank}")]
    ScoresNotSorted { query_id: String, rank: usize },
    #[error("qrels line {line}: {reason}")]
    MalformedQrels { line: usize, reason: String },
}

/// Granularity of relevance judgments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgmentLevel {
    Chunk,
    Doc,
}

/// Relevance judgments: each query maps to its non-empty set of relevant
/// targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Qrels {
    map: BTreeMap<String, BTreeSet<String>>,
    level: JudgmentLevel,
}

impl Qrels {
    pub fn new(
        map: BTreeMap<String, BTreeSet<String>>,
        level: JudgmentLevel,
    ) -> Result<Self, EvalError> {
        if map.values().any(|s| s.is_empty())
            || map.keys().any(String::is_empty)
            || map.values().flatten().any(String::is_empty)
        {
            return Err(EvalError::EmptyRelevantSet);
        }
        Ok(Qrels { map, level })
    }

    /// Parses TREC-style qrels lines: `query_id iteration target_id rel`.
    /// Targets with a positive judgment are relevant; zero judgments are
    /// recorded but contribute nothing.
    pub fn from_trec(content: &str, level: JudgmentLevel) -> Result<Self, EvalError> {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(EvalError::MalformedQrels {
                    line: line_no,
                    reason: alloc::format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let rel: i64 = fields[3].parse().map_err(|_| EvalError::MalformedQrels {
                line: line_no,
                reason: alloc::format!("relevance {:?} is not an integer", fields[3]),
            })?;
            if rel > 0 {
                map.entry(fields[0].to_string())
                    .or_default()
                    .insert(fields[2].to_string());
            }
        }
        Qrels::new(map, level)
    }

    pub fn level(&self) -> JudgmentLevel {
        self.level
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Materialized retrieval output: per query, targets ranked by descending
/// score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    map: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunFile {
    pub fn new() -> Self {
        RunFile::default()
    }

    /// Adds one query's ranking, validating the ordering invariants.
    pub fn insert(
        &mut self,
        query_id: &str,
        ranked: Vec<(String, f64)>,
    ) -> Result<(), EvalError> {
        let mut seen = BTreeSet::new();
        for (rank, (target, score)) in ranked.iter().enumerate() {
            if !seen.insert(target.clone()) {
                return Err(EvalError::DuplicateTarget {
                    query_id: query_id.to_string(),
                    target_id: target.clone(),
                });
            }
            if rank > 0 && *score > ranked[rank - 1].1 {
                return Err(EvalError::ScoresNotSorted {
                    query_id: query_id.to_string(),
                    rank: rank + 1,
                });
            }
        }
        self.map.insert(query_id.to_string(), ranked);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[(String, f64)]> {
        self.map.get(query_id).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<(String, f64)>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Average precision: mean of precision@rank over the ranks holding
/// relevant targets, divided by the total number of relevant targets.
pub fn average_precision(
    ranked: &[String],
    relevant: &BTreeSet<String>,
) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    let mut hits = 0u64;
    let mut sum = 0.0;
    for (i, target) in ranked.iter().enumerate() {
        if relevant.contains(target) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// 1 over the rank of the first relevant target; 0 when none is retrieved.
pub fn reciprocal_rank(ranked: &[String], relevant: &BTreeSet<String>) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    for (i, target) in ranked.iter().enumerate() {
        if relevant.contains(target) {
            return Ok(1.0 / (i + 1) as f64);
        }
    }
    Ok(0.0)
}

/// `|relevant ∩ top-K| / K`. Short lists are not padded: the denominator
/// stays K.
pub fn precision_at_k(
    ranked: &[String],
    relevant: &BTreeSet<String>,
    k: usize,
) -> Result<f64, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidCutoff);
    }
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|t| relevant.contains(*t))
        .count();
    Ok(hits as f64 / k as f64)
}

/// `|relevant ∩ top-K| / |relevant|`.
pub fn recall_at_k(
    ranked: &[String],
    relevant: &BTreeSet<String>,
    k: usize,
) -> Result<f64, EvalError> {
    if k < 1 {
        return Err(EvalError::InvalidCutoff);
    }
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|t| relevant.contains(*t))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Per-query metric breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ap: f64,
    pub rr: f64,
    pub precision: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
}

/// Echo of the evaluation configuration, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigEcho {
    pub k_values: Vec<usize>,
    pub level: JudgmentLevel,
    /// Free-form description of how the run was produced (index flags etc.).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub run_config: BTreeMap<String, String>,
}

/// Aggregate metrics over a run: unweighted means over queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map: f64,
    pub mrr: f64,
    pub precision: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub config: EvalConfigEcho,
}

/// Collapses a ranked chunk list to documents: a document takes its best
/// chunk's position and later chunks of an already-seen document are
/// skipped.
pub fn collapse_to_docs(ranked: &[(String, f64)]) -> Vec<(String, f64)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (chunk_id, score) in ranked {
        let doc_id = Chunk::doc_id_of(chunk_id).to_string();
        if seen.insert(doc_id.clone()) {
            out.push((doc_id, *score));
        }
    }
    out
}

/// Scores a run against judgments at the given cutoffs. Every query in the
/// run must be judged.
pub fn evaluate(run: &RunFile, qrels: &Qrels, k_values: &[usize]) -> Result<MetricsReport, EvalError> {
    evaluate_with_echo(run, qrels, k_values, BTreeMap::new())
}

pub fn evaluate_with_echo(
    run: &RunFile,
    qrels: &Qrels,
    k_values: &[usize],
    run_config: BTreeMap<String, String>,
) -> Result<MetricsReport, EvalError> {
    let unjudged: Vec<String> = run
        .queries()
        .filter(|q| qrels.relevant(q).is_none())
        .cloned()
        .collect();
    if !unjudged.is_empty() {
        return Err(EvalError::UnjudgedQueries(unjudged));
    }
    if k_values.iter().any(|&k| k < 1) {
        return Err(EvalError::InvalidCutoff);
    }

    let mut per_query = BTreeMap::new();
    let mut ap_sum = 0.0;
    let mut rr_sum = 0.0;
    let mut p_sums: BTreeMap<usize, f64> = k_values.iter().map(|&k| (k, 0.0)).collect();
    let mut r_sums: BTreeMap<usize, f64> = k_values.iter().map(|&k| (k, 0.0)).collect();

    for (query_id, ranked_scored) in run.iter() {
        let relevant = qrels.relevant(query_id).expect("checked above");
        let collapsed;
        let ranked_scored = match qrels.level() {
            JudgmentLevel::Chunk => ranked_scored.as_slice(),
            JudgmentLevel::Doc => {
                collapsed = collapse_to_docs(ranked_scored);
                collapsed.as_slice()
            }
        };
        let ranked: Vec<String> = ranked_scored.iter().map(|(t, _)| t.clone()).collect();
        let ap = average_precision(&ranked, relevant)?;
        let rr = reciprocal_rank(&ranked, relevant)?;
        let mut precision = BTreeMap::new();
        let mut recall = BTreeMap::new();
        for &k in k_values {
            let p = precision_at_k(&ranked, relevant, k)?;
            let r = recall_at_k(&ranked, relevant, k)?;
            precision.insert(k, p);
            recall.insert(k, r);
            *p_sums.get_mut(&k).unwrap() += p;
            *r_sums.get_mut(&k).unwrap() += r;
        }
        ap_sum += ap;
        rr_sum += rr;
        per_query.insert(
            query_id.clone(),
            QueryMetrics {
                ap,
                rr,
                precision,
                recall,
            },
        );
    }

    let n = run.len().max(1) as f64;
    Ok(MetricsReport {
        map: ap_sum / n,
        mrr: rr_sum / n,
        precision: p_sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
        recall: r_sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
        per_query,
        config: EvalConfigEcho {
            k_values: k_values.to_vec(),
            level: qrels.level(),
            run_config,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn relset(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn average_precision_hand_case() {
        // Relevant at ranks 1 and 3, two relevant total.
        let ap = average_precision(&ids(&["r1", "x", "r2", "y"]), &relset(&["r1", "r2"])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-9);
        assert!((ap - 0.8333333333).abs() < 1e-9);
    }

    #[test]
    fn average_precision_extremes() {
        let one = average_precision(&ids(&["r", "x"]), &relset(&["r"])).unwrap();
        assert_eq!(one, 1.0);
        let zero = average_precision(&ids(&["x", "y"]), &relset(&["r"])).unwrap();
        assert_eq!(zero, 0.0);
        assert!(average_precision(&ids(&["x"]), &BTreeSet::new()).is_err());
    }

    #[test]
    fn reciprocal_rank_cases() {
        let rr = reciprocal_rank(&ids(&["x", "y", "r"]), &relset(&["r"])).unwrap();
        assert!((rr - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(
            reciprocal_rank(&ids(&["r", "x"]), &relset(&["r"])).unwrap(),
            1.0
        );
        assert_eq!(
            reciprocal_rank(&ids(&["x", "y"]), &relset(&["r"])).unwrap(),
            0.0
        );
    }

    #[test]
    fn precision_and_recall_cutoffs() {
        let ranked = ids(&["r1", "x", "y", "z", "r2"]);
        let relevant = relset(&["r1", "r2"]);
        assert!((recall_at_k(&ranked, &relevant, 5).unwrap() - 1.0).abs() < 1e-12);
        assert!((recall_at_k(&ranked, &relevant, 4).unwrap() - 0.5).abs() < 1e-12);
        assert!((precision_at_k(&ranked, &relevant, 5).unwrap() - 0.4).abs() < 1e-12);
        // Short list, no padding: denominator stays K.
        let short = ids(&["r1", "r2", "x", "y"]);
        assert!((precision_at_k(&short, &relevant, 10).unwrap() - 0.2).abs() < 1e-12);
        assert!(precision_at_k(&short, &relevant, 0).is_err());
    }

    fn run_one(query: &str, ranked: &[(&str, f64)]) -> RunFile {
        let mut run = RunFile::new();
        run.insert(
            query,
            ranked.iter().map(|(t, s)| (t.to_string(), *s)).collect(),
        )
        .unwrap();
        run
    }

    #[test]
    fn run_file_validates_order_and_duplicates() {
        let mut run = RunFile::new();
        let dup = run.insert(
            "q",
            alloc::vec![("a".to_string(), 0.9), ("a".to_string(), 0.8)],
        );
        assert!(matches!(dup, Err(EvalError::DuplicateTarget { .. })));
        let unsorted = run.insert(
            "q",
            alloc::vec![("a".to_string(), 0.5), ("b".to_string(), 0.8)],
        );
        assert!(matches!(unsorted, Err(EvalError::ScoresNotSorted { .. })));
    }

    #[test]
    fn perfect_single_query_report() {
        let run = run_one("q1", &[("r", 0.9), ("x", 0.5)]);
        let mut map = BTreeMap::new();
        map.insert("q1".to_string(), relset(&["r"]));
        let qrels = Qrels::new(map, JudgmentLevel::Chunk).unwrap();
        let report = evaluate(&run, &qrels, &[1, 2]).unwrap();
        assert_eq!(report.map, 1.0);
        assert_eq!(report.mrr, 1.0);
        assert_eq!(report.recall[&1], 1.0);
        assert_eq!(report.recall[&2], 1.0);
        assert_eq!(report.per_query["q1"].ap, 1.0);
    }

    #[test]
    fn map_equals_mrr_bitwise_with_single_relevant_targets() {
        let mut run = RunFile::new();
        let mut qmap = BTreeMap::new();
        for (i, rank) in [3usize, 1, 7, 2, 5].iter().enumerate() {
            let qid = alloc::format!("q{i}");
            let ranked: Vec<(String, f64)> = (0..10)
                .map(|r| {
                    let id = if r + 1 == *rank {
                        "rel".to_string()
                    } else {
                        alloc::format!("x{r}")
                    };
                    (id, 1.0 - r as f64 * 0.05)
                })
                .collect();
            run.insert(&qid, ranked).unwrap();
            qmap.insert(qid, relset(&["rel"]));
        }
        let qrels = Qrels::new(qmap, JudgmentLevel::Chunk).unwrap();
        let report = evaluate(&run, &qrels, &[5]).unwrap();
        assert_eq!(report.map.to_bits(), report.mrr.to_bits());
        for q in report.per_query.values() {
            assert_eq!(q.ap.to_bits(), q.rr.to_bits());
        }
    }

    #[test]
    fn unjudged_queries_are_listed() {
        let run = run_one("mystery", &[("a", 1.0)]);
        let mut qmap = BTreeMap::new();
        qmap.insert("other".to_string(), relset(&["a"]));
        let qrels = Qrels::new(qmap, JudgmentLevel::Chunk).unwrap();
        match evaluate(&run, &qrels, &[1]) {
            Err(EvalError::UnjudgedQueries(qs)) => assert_eq!(qs, ids(&["mystery"])),
            other => panic!("expected unjudged error, got {other:?}"),
        }
    }

    #[test]
    fn doc_level_judgments_collapse_chunks() {
        // Chunks of doc "a" at ranks 1 and 3; doc "b" chunk at rank 2.
        let run = run_one("q", &[("a#0", 0.9), ("b#1", 0.8), ("a#4", 0.7), ("c#0", 0.6)]);
        let mut qmap = BTreeMap::new();
        qmap.insert("q".to_string(), relset(&["b"]));
        let qrels = Qrels::new(qmap, JudgmentLevel::Doc).unwrap();
        let report = evaluate(&run, &qrels, &[1, 2]).unwrap();
        // Doc ranking is a, b, c: the relevant doc sits at rank 2.
        assert!((report.mrr - 0.5).abs() < 1e-12);
        assert_eq!(report.recall[&2], 1.0);
        assert_eq!(report.recall[&1], 0.0);
    }

    #[test]
    fn trec_qrels_parse_and_reject() {
        let qrels = Qrels::from_trec("q1 0 d1 1\nq1 0 d2 0\nq2 0 d3 1\n", JudgmentLevel::Chunk)
            .unwrap();
        assert_eq!(qrels.len(), 2);
        assert!(qrels.relevant("q1").unwrap().contains("d1"));
        assert!(!qrels.relevant("q1").unwrap().contains("d2"));
        let err = Qrels::from_trec("q1 0 d1\n", JudgmentLevel::Chunk).unwrap_err();
        assert!(matches!(err, EvalError::MalformedQrels { line: 1, .. }));
    }

    #[test]
    fn evaluation_is_permutation_invariant() {
        let mut qmap = BTreeMap::new();
        let mut run_a = RunFile::new();
        let mut run_b = RunFile::new();
        let queries = [
            ("qa", alloc::vec![("r".to_string(), 0.9), ("x".to_string(), 0.1)]),
            ("qb", alloc::vec![("y".to_string(), 0.9), ("r".to_string(), 0.1)]),
            ("qc", alloc::vec![("z".to_string(), 0.9), ("w".to_string(), 0.1)]),
        ];
        for (q, ranked) in queries.iter() {
            qmap.insert(q.to_string(), relset(&["r"]));
        // Insert in different orders; BTreeMap canonicalizes anyway.
            run_a.insert(q, ranked.clone()).unwrap();
        }
        for (q, ranked) in queries.iter().rev() {
            run_b.insert(q, ranked.clone()).unwrap();
        }
        let qrels = Qrels::new(qmap, JudgmentLevel::Chunk).unwrap();
        let a = evaluate(&run_a, &qrels, &[1, 2]).unwrap();
        let b = evaluate(&run_b, &qrels, &[1, 2]).unwrap();
        assert_eq!(a, b);
    }
}
